"""Command-line surface: example round trips, exit codes, file formats."""

import json
import hashlib
import os

import numpy as np
import pytest

from planarflow.cli import fig2_grid, main
from planarflow.registry import DEFAULT_COMMAND, EXAMPLE_IDS, example_config


def run_cli(*args):
    return main(list(args))


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


MINI_CONFIG = """
name = "mini"

[params]
gamma = 0.0

[field]
u1 = "x2"
u2 = "-gamma*x2 - x1"

[window]
xmin = -2.0
xmax = 2.0
ymin = -2.0
ymax = 2.0
nx = 32
ny = 32

[criterion]
alpha = "1"

[ansatz.upper]
a = "1"
b = 1.0

[orbits]
seeds = [[1.0, 0.0]]
tmax = 20.0

[simulate]
gamma = 0.1
dt = 1e-3
T = 0.2
ensemble = 128
seed = 7

[decompose]
method = "lienard"
p = "x1"
q = ["gamma"]
"""


class TestExampleRoundTrips:
    @pytest.mark.parametrize("example_id", EXAMPLE_IDS)
    def test_default_command_runs_clean(self, example_id, tmp_path):
        out = tmp_path / example_id
        assert run_cli("--out", str(out), "example", example_id) == 0
        doc = json.load(open(out / f"example_{example_id}.json"))
        assert doc["id"] == example_id
        assert doc["default_command"] == DEFAULT_COMMAND[example_id]
        produced = set(os.listdir(out))
        if DEFAULT_COMMAND[example_id] == "decompose":
            assert "decomposition.json" in produced
        elif DEFAULT_COMMAND[example_id] == "check-hamiltonian":
            assert "check_hamiltonian.json" in produced
        else:
            assert "exclusion_upper.json" in produced or "exclusion_lower.json" in produced

    def test_criterion_examples_report_hamiltonian(self, tmp_path):
        for example_id in ("kermack", "strogatz", "kuramoto_pair", "lotka_volterra"):
            out = tmp_path / example_id
            assert run_cli("--out", str(out), "check-hamiltonian",
                           "--example", example_id) == 0
            doc = json.load(open(out / "check_hamiltonian.json"))
            assert doc["criterion"]["verdict"] == "Hamiltonian"
            assert doc["criterion"]["mode"] == "symbolic"
            assert "recovery" in doc

    def test_vanderpol_trivial_multiplier_fails(self, tmp_path):
        out = tmp_path / "vdp"
        assert run_cli("--out", str(out), "check-hamiltonian", "--example", "vanderpol") == 0
        doc = json.load(open(out / "check_hamiltonian.json"))
        assert doc["criterion"]["verdict"] == "NotHamiltonian"

    def test_harmonic_decompose_fixture(self, tmp_path):
        out = tmp_path / "h"
        assert run_cli("--out", str(out), "decompose", "--example", "harmonic") == 0
        doc = json.load(open(out / "decomposition.json"))
        assert doc["method"] == "fixture"
        assert doc["reconstructed_u1"] == "omega0*x2"

    def test_harmonic_transform(self, tmp_path):
        out = tmp_path / "t"
        assert run_cli("--out", str(out), "transform", "--example", "harmonic") == 0
        doc = json.load(open(out / "transformed.json"))
        assert doc["det_g"] == "x1^2"
        assert doc["Q"] is not None
        assert "triangular" in doc["note"]


class TestConfigsAndExitCodes:
    def test_custom_config_pipeline(self, tmp_path):
        cfg = tmp_path / "mini.toml"
        cfg.write_text(MINI_CONFIG)
        for cmd in ("decompose", "check-hamiltonian", "exclude-orbits",
                    "find-orbits", "simulate"):
            out = tmp_path / cmd
            assert run_cli("--out", str(out), cmd, "--config", str(cfg)) == 0

    def test_missing_system(self, tmp_path, capsys):
        assert run_cli("--out", str(tmp_path), "decompose") == 2
        assert "error: config" in capsys.readouterr().err

    def test_bad_toml(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("name = [unclosed")
        assert run_cli("--out", str(tmp_path), "decompose", "--config", str(bad)) == 2
        assert "TOML" in capsys.readouterr().err

    def test_bad_expression(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('[field]\nu1 = "x1 +"\nu2 = "x2"\n'
                       '[window]\nxmin = -1.0\nxmax = 1.0\nymin = -1.0\nymax = 1.0\n')
        assert run_cli("--out", str(tmp_path), "decompose", "--config", str(bad)) == 2

    def test_unknown_identifier_in_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('[field]\nu1 = "zeta*x1"\nu2 = "x2"\n'
                       '[window]\nxmin = -1.0\nxmax = 1.0\nymin = -1.0\nymax = 1.0\n')
        assert run_cli("--out", str(tmp_path), "decompose", "--config", str(bad)) == 2

    def test_numeric_failure_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.toml"
        # a flow without recurrences: closed-orbit search must fail with 3
        cfg.write_text('[field]\nu1 = "1"\nu2 = "0"\n'
                       '[window]\nxmin = -1.0\nxmax = 1.0\nymin = -1.0\nymax = 1.0\n'
                       '[orbits]\nseeds = [[0.0, 0.0]]\ntmax = 3.0\n')
        assert run_cli("--out", str(tmp_path), "find-orbits", "--config", str(cfg)) == 3
        assert "NoClosureWithinTmax" in capsys.readouterr().err

    def test_grid_override(self, tmp_path):
        cfg = tmp_path / "mini.toml"
        cfg.write_text(MINI_CONFIG)
        out = tmp_path / "g"
        assert run_cli("--out", str(out), "--grid", "24,20", "decompose",
                       "--config", str(cfg)) == 0


class TestDeterminism:
    def test_simulate_outputs_bit_identical(self, tmp_path):
        cfg = tmp_path / "mini.toml"
        cfg.write_text(MINI_CONFIG)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert run_cli("--out", str(out1), "simulate", "--config", str(cfg)) == 0
        assert run_cli("--out", str(out2), "simulate", "--config", str(cfg)) == 0
        for name in ("ensemble.csv", "ensemble.bin", "stats.json"):
            assert sha(out1 / name) == sha(out2 / name), name

    def test_fig2_outputs_bit_identical(self, tmp_path):
        out1, out2 = tmp_path / "f1", tmp_path / "f2"
        for out in (out1, out2):
            assert run_cli("--out", str(out), "fig2", "--J=1", "--K=-1", "--n", "64") == 0
        assert sha(out1 / "fig2_J1_K-1.csv") == sha(out2 / "fig2_J1_K-1.csv")


class TestFig2:
    def test_grid_values(self):
        grid, vals = fig2_grid(1.0, -1.0, n=257)
        assert vals.shape == (257, 257)
        assert vals.min() >= -1.0 and vals.max() <= 0.0
        # node at (pi/2, pi/2): -|sin|^J |sin|^(-K) = -1
        i = np.argmin(np.abs(grid.xs() - np.pi / 2))
        j = np.argmin(np.abs(grid.ys() - np.pi / 2))
        assert vals[i, j] == pytest.approx(-1.0, abs=1e-12)

    def test_positive_k_clipped_on_axes(self):
        grid, vals = fig2_grid(1.0, 1.0, n=64)
        assert vals[0, :].min() == -1.0  # singular row y = -pi clipped

    def test_closed_level_sets_flip_with_sign_of_k(self):
        from scipy import ndimage
        for k, expect_closed in ((-1.0, True), (1.0, False)):
            _, vals = fig2_grid(1.0, k, n=128)
            found_interior = False
            for level in (-0.8, -0.5, -0.2):
                labels, count = ndimage.label(vals <= level)
                for lab in range(1, count + 1):
                    mask = labels == lab
                    touches = (mask[0, :].any() or mask[-1, :].any()
                               or mask[:, 0].any() or mask[:, -1].any())
                    if not touches:
                        found_interior = True
            assert found_interior == expect_closed, k

    def test_rejects_nonpositive_j(self, tmp_path):
        assert run_cli("--out", str(tmp_path), "fig2", "--J=0", "--K=1") == 2


class TestFig3:
    def test_duffing_outputs(self, tmp_path):
        out = tmp_path / "fig3"
        assert run_cli("--out", str(out), "fig3", "duffing") == 0
        files = set(os.listdir(out))
        assert {"orbits.json", "singular_curves.csv",
                "exclusion_upper.json", "exclusion_lower.json"} <= files
        assert {"orbit_0.csv", "orbit_1.csv", "orbit_2.csv"} <= files
        orbits = json.load(open(out / "orbits.json"))["orbits"]
        assert len(orbits) == 3
        for orbit in orbits:
            assert orbit["crossings"]["x2"] >= 2

    def test_harmonic_circles(self, tmp_path):
        out = tmp_path / "fig3h"
        assert run_cli("--out", str(out), "fig3", "harmonic") == 0
        poly = np.loadtxt(out / "orbit_1.csv", delimiter=",", skiprows=1)
        radius = np.hypot(poly[:, 0], poly[:, 1])
        assert np.abs(radius - 1.0).max() <= 1e-6

    def test_vanderpol_alpha_flag(self, tmp_path):
        out = tmp_path / "fig3v"
        assert run_cli("--out", str(out), "fig3", "vanderpol", "--alpha", "0.7") == 0
        orbits = json.load(open(out / "orbits.json"))["orbits"]
        assert len(orbits) == 1
        assert all(v >= 2 for v in orbits[0]["crossings"].values())


class TestRegistry:
    def test_all_ids_build(self):
        for example_id in EXAMPLE_IDS:
            cfg = example_config(example_id)
            assert cfg.name == example_id
            assert cfg.window.nx >= 8

    def test_unknown_id(self):
        with pytest.raises(KeyError):
            example_config("lorenz")
