"""Command-line surface.

Subcommands (run ``planarflow <cmd> --help`` for flags):

    decompose         closed-form or numeric Helmholtz decomposition
    transform         push a decomposition through the configured mapping
    check-hamiltonian criterion I/II report, plus recovery when it passes
    exclude-orbits    ansatz ODE solutions, pd masks, exclusion regions
    find-orbits       closed-orbit search from the configured seeds
    simulate          stochastic ensemble + moment statistics
    fig2              coupled-oscillator Hamiltonian contour grids over (J, K)
    fig3              trajectories and singular curves for an orbit example
    example <id>      materialize a built-in example and run its default command

Every run takes either ``--example <id>`` or ``--config file.toml``.  Outputs
are data files (CSV/JSON/binary) written atomically into ``--out``.  Exit
codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np

from . import helmholtz as hh
from . import orbits as orb
from .config import SystemConfig, load_config
from .errors import ConfigError, PlanarflowError
from .expr import Point2, bind_params, compile_fn, serialize
from .geometry import (Matrix2Field, metric_tensor,
                       polar_factors_field, transform_noise, transform_system)
from .grid import Grid2
from .hamiltonian import check_criterion_I, check_criterion_II, recover_hamiltonian
from .langevin import LangevinSpec, simulate
from .registry import DEFAULT_COMMAND, EXAMPLE_IDS, example_config

__all__ = ["main"]


def _atomic_write(path: str, data) -> None:
    """Write bytes/str to path via a temp file + rename."""
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _write_rows(path: str, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(repr(v) if isinstance(v, float) else str(v) for v in row)
                 for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_matrix(path: str, grid: Grid2, values: np.ndarray) -> None:
    """Matrix CSV: first line the window spec, then one row per x1 grid line."""
    head = (f"# xmin={float(grid.xmin)!r} xmax={float(grid.xmax)!r} ymin={float(grid.ymin)!r} "
            f"ymax={float(grid.ymax)!r} nx={grid.nx} ny={grid.ny}")
    lines = [head]
    lines.extend(",".join(repr(float(v)) for v in row) for row in values)
    _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------

def cmd_decompose(cfg: SystemConfig, out: str) -> None:
    method = cfg.decompose_method or ("fixture" if cfg.hd else
                                      "lienard" if cfg.lienard else
                                      "modal" if cfg.modal else "numeric")
    result = {"name": cfg.name, "method": method}
    if method == "fixture":
        hd = cfg.hd
    elif method == "lienard":
        hd = hh.lienard_decompose(cfg.lienard)
    elif method == "modal":
        hd = hh.modal_decompose(cfg.modal)
    else:
        sampled = hh.GridField.sample(cfg.field, cfg.window, params=cfg.params)
        v, h = hh.numeric_decompose(sampled)
        xs, ys = cfg.window.xs(), cfg.window.ys()
        _write_rows(os.path.join(out, "potentials.csv"), "x1,x2,V,H",
                    ((float(xs[i]), float(ys[j]), float(v[i, j]), float(h[i, j]))
                     for i in range(cfg.window.nx) for j in range(cfg.window.ny)))
        result["files"] = ["potentials.csv"]
        _write_json(os.path.join(out, "decomposition.json"), result)
        return
    recon = hh.reconstruct(hd)
    result.update({
        "V": serialize(hd.V),
        "H": serialize(hd.H),
        "basis": "cartesian" if hd.basis is hh.CARTESIAN else "curvilinear",
        "reconstructed_u1": serialize(recon.u1),
        "reconstructed_u2": serialize(recon.u2),
    })
    if hd.basis is not hh.CARTESIAN:
        result["sqrt_detg"] = serialize(hd.basis.sqrt_det())
    _write_json(os.path.join(out, "decomposition.json"), result)


def cmd_transform(cfg: SystemConfig, out: str) -> None:
    if cfg.mapping is None:
        raise ConfigError("transform requires a mapping block")
    if cfg.hd is not None:
        hd = cfg.hd
    elif cfg.lienard is not None:
        hd = hh.lienard_decompose(cfg.lienard)
    else:
        raise ConfigError("transform requires a closed-form decomposition (fixture or lienard)")
    tf = transform_system(hd, cfg.mapping, cfg.params)
    g, detg = metric_tensor(cfg.mapping)
    doc = {
        "name": cfg.name,
        "u1": serialize(tf.u1),
        "u2": serialize(tf.u2),
        "metric": [serialize(e) for e in g.entries()],
        "det_g": serialize(detg),
        "noise_rule": "transformed noise = Q^T times original noise",
        "note": ("polar factor h is the symmetric square root of J^T J; it is "
                 "triangular only when the metric is diagonal"),
    }
    try:
        q, h = polar_factors_field(cfg.mapping)
        doc["Q"] = [serialize(e) for e in q.entries()]
        doc["h"] = [serialize(e) for e in h.entries()]
        doc["Q_transpose"] = [serialize(e) for e in transform_noise(
            q, probe=cfg.mapping.probe(), params=cfg.params).entries()]
    except (ValueError, PlanarflowError):
        doc["Q"] = None
    _write_json(os.path.join(out, "transformed.json"), doc)


def cmd_check_hamiltonian(cfg: SystemConfig, out: str, tol: float) -> None:
    probe = cfg.window
    if cfg.alpha is None and cfg.noise_B is None:
        raise ConfigError("check-hamiltonian requires criterion.alpha or criterion.B")
    if cfg.alpha is not None:
        report = check_criterion_I(cfg.field, cfg.alpha, probe, tol, cfg.params)
    else:
        report = check_criterion_II(cfg.field, cfg.noise_B, probe, tol, cfg.params)
    doc = {"name": cfg.name, "criterion": report.to_json_obj()}
    if report.verdict == "Hamiltonian" and cfg.basepoint is not None and cfg.alpha is not None:
        rec = recover_hamiltonian(cfg.field.map_args(lambda e: bind_params(e, cfg.params)),
                                  bind_params(cfg.alpha, cfg.params),
                                  cfg.basepoint, cfg.region or cfg.window)
        doc["recovery"] = {
            "mode": rec.mode,
            "H": serialize(rec.Htilde) if rec.Htilde is not None else None,
            "inv_sqrt_detg": serialize(rec.inv_sqrt_detg),
            "basepoint": [cfg.basepoint.x1, cfg.basepoint.x2],
            "check_residual": rec.check_residual,
        }
        if rec.grid_values is not None:
            xs, ys = rec.region.xs(), rec.region.ys()
            _write_rows(os.path.join(out, "hamiltonian_grid.csv"), "x1,x2,H",
                        ((float(xs[i]), float(ys[j]), float(rec.grid_values[i, j]))
                         for i in range(rec.region.nx) for j in range(rec.region.ny)))
            doc["recovery"]["grid_file"] = "hamiltonian_grid.csv"
    _write_json(os.path.join(out, "check_hamiltonian.json"), doc)


def _curve_polylines(curve, window: Grid2, params, n: int = 400):
    """Sampled zero-set branches of an implicit curve on the window."""
    fn = compile_fn(curve, params)
    xs = np.linspace(window.xmin, window.xmax, n)
    ys = np.linspace(window.ymin, window.ymax, n)
    branches = []
    current = []
    # scan columns: for each x, find zero crossings in y
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(xs[:, None], ys[None, :], 0.0), dtype=float)
    if vals.ndim == 0 or (np.ndim(vals) == 2 and vals.shape != (n, n)):
        vals = np.broadcast_to(vals, (n, n)).astype(float)
    for i, x in enumerate(xs):
        col = vals[i]
        hits = []
        for j in range(n - 1):
            a, b = col[j], col[j + 1]
            if not (np.isfinite(a) and np.isfinite(b)):
                continue
            if a == 0.0:
                hits.append(ys[j])
            elif a * b < 0:
                hits.append(ys[j] - a * (ys[j + 1] - ys[j]) / (b - a))
        if len(hits) == 1:
            current.append((float(x), float(hits[0])))
        else:
            if len(current) > 1:
                branches.append(current)
            current = []
            for y in hits:
                branches.append([(float(x), float(y))])
    if len(current) > 1:
        branches.append(current)
    # vertical lines x1 = const produce no column crossings; handle directly
    if not branches:
        for j, y in enumerate(ys[:-1]):
            row = vals[:, j]
            for i in range(n - 1):
                a, b = row[i], row[i + 1]
                if np.isfinite(a) and np.isfinite(b) and a * b < 0:
                    x = xs[i] - a * (xs[i + 1] - xs[i]) / (b - a)
                    branches.append([(float(x), float(ys[j])), (float(x), float(ys[j + 1]))])
            break
        if branches:
            # collapse to vertical polylines
            xs_v = sorted({round(p[0][0], 9) for p in branches})
            branches = [[(x, float(window.ymin)), (x, float(window.ymax))] for x in xs_v]
    return [b for b in branches if len(b) >= 2]


def cmd_exclude_orbits(cfg: SystemConfig, out: str) -> None:
    specs = [(k, s) for k, s in (("upper", cfg.ansatz_upper), ("lower", cfg.ansatz_lower))
             if s is not None]
    if not specs:
        raise ConfigError("exclude-orbits requires at least one ansatz block")
    params = cfg.orbit_params()
    curve_rows = []
    for kind, spec in specs:
        report = orb.exclusion_report(cfg.field, spec, cfg.window, params)
        _write_json(os.path.join(out, f"exclusion_{kind}.json"), report.to_json_obj())
        for ci, curve in enumerate(report.singular_curves):
            for bi, branch in enumerate(_curve_polylines(curve, cfg.window, params)):
                for (x, y) in branch:
                    curve_rows.append((f"{kind}:{serialize(curve)}", bi, float(x), float(y)))
    _write_rows(os.path.join(out, "singular_curves.csv"), "curve,branch,x1,x2", curve_rows)


def cmd_find_orbits(cfg: SystemConfig, out: str) -> None:
    if not cfg.orbit_seeds:
        raise ConfigError("find-orbits requires orbit seeds")
    tol = cfg.orbit_tol
    params = cfg.orbit_params()
    field = cfg.field
    reports = []
    curves = []
    for kind, spec in (("upper", cfg.ansatz_upper), ("lower", cfg.ansatz_lower)):
        if spec is not None:
            desc = orb.corollary_ode_rhs(field, spec)
            curves.extend(orb.singular_curves_of(desc.denom, params))
    for k, seed in enumerate(cfg.orbit_seeds):
        report = orb.find_closed_orbit(field, seed, cfg.tmax, tol, params, cfg.settle)
        if curves:
            orb.verify_crossings(report, curves, params)
        reports.append(report.to_json_obj())
        _write_rows(os.path.join(out, f"orbit_{k}.csv"), "x1,x2",
                    ((float(p[0]), float(p[1])) for p in report.polyline))
    _write_json(os.path.join(out, "orbits.json"), {"name": cfg.name, "orbits": reports})


def cmd_simulate(cfg: SystemConfig, out: str, x0=None) -> None:
    start = x0 or Point2(1.0, 0.0)
    save_every = max(1, int(round(cfg.T / cfg.dt)) // 50)  # about 50 stored frames
    spec = LangevinSpec(cfg.field, cfg.noise_B or Matrix2Field.identity(),
                        gamma=cfg.gamma, dt=cfg.dt, T=cfg.T,
                        ensemble_size=cfg.ensemble_size, seed=cfg.seed,
                        scheme=cfg.scheme, params=cfg.params, save_every=save_every)
    ens = simulate(spec, start)
    ens.to_csv(os.path.join(out, "ensemble.csv"))
    ens.to_binary(os.path.join(out, "ensemble.bin"))
    final = ens.at_time(float(ens.times[-1]))
    doc = {
        "name": cfg.name, "t_final": float(ens.times[-1]),
        "members": int(spec.ensemble_size), "blown": int(ens.blown.sum()),
        "mean": final.mean(axis=0).tolist(),
        "cov": np.cov(final, rowvar=False).tolist(),
        "scheme": spec.scheme, "gamma": spec.gamma, "seed": spec.seed,
    }
    _write_json(os.path.join(out, "stats.json"), doc)


def fig2_grid(j: float, k: float, n: int = 256) -> tuple:
    """Values of -|H̃| for the coupled-oscillator pair on [-π, π]², clipped to
    [-1, 0] where singular."""
    grid = Grid2(-np.pi, np.pi, -np.pi, np.pi, n, n)
    x, y = grid.mesh()
    with np.errstate(all="ignore"):
        vals = -np.abs(np.sin(y)) ** j * np.abs(np.sin(x)) ** (-k)
    vals = np.where(np.isfinite(vals), vals, -1.0)
    return grid, np.clip(vals, -1.0, 0.0)


def cmd_fig2(j_list, k_list, out: str, n: int = 256) -> None:
    files = []
    for j in j_list:
        if j <= 0:
            raise ConfigError("J values must be positive")
        for k in k_list:
            grid, vals = fig2_grid(j, k, n)
            fname = f"fig2_J{j:g}_K{k:g}.csv"
            _write_matrix(os.path.join(out, fname), grid, vals)
            files.append(fname)
    _write_json(os.path.join(out, "fig2_index.json"),
                {"files": files, "J": list(j_list), "K": list(k_list), "n": n})


def cmd_fig3(example_id: str, out: str, alpha=None) -> None:
    if example_id not in ("harmonic", "vanderpol", "duffing"):
        raise ConfigError("fig3 expects one of: harmonic, vanderpol, duffing")
    cfg = example_config(example_id)
    if alpha is not None and "alpha" in cfg.params:
        params = dict(cfg.params)
        params["alpha"] = float(alpha)
        cfg = replace(cfg, params=params)
    cmd_exclude_orbits(cfg, out)
    cmd_find_orbits(cfg, out)


def cmd_example(example_id: str, out: str, tol: float) -> None:
    cfg = example_config(example_id)
    doc = {
        "id": example_id,
        "params": cfg.params,
        "u1": serialize(cfg.field.u1),
        "u2": serialize(cfg.field.u2),
        "window": cfg.window.to_dict(),
        "alpha": serialize(cfg.alpha) if cfg.alpha is not None else None,
        "reference_h": serialize(cfg.reference_h) if cfg.reference_h is not None else None,
        "default_command": DEFAULT_COMMAND[example_id],
    }
    _write_json(os.path.join(out, f"example_{example_id}.json"), doc)
    _dispatch(DEFAULT_COMMAND[example_id], cfg, out, tol)


def _dispatch(command: str, cfg: SystemConfig, out: str, tol: float) -> None:
    if command == "decompose":
        cmd_decompose(cfg, out)
    elif command == "transform":
        cmd_transform(cfg, out)
    elif command == "check-hamiltonian":
        cmd_check_hamiltonian(cfg, out, tol)
    elif command == "exclude-orbits":
        cmd_exclude_orbits(cfg, out)
    elif command == "find-orbits":
        cmd_find_orbits(cfg, out)
    elif command == "simulate":
        cmd_simulate(cfg, out)
    else:
        raise ConfigError(f"unknown command {command!r}")


# ---------------------------------------------------------------------------
# argument parsing and process entry
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="planarflow", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    ap.add_argument("--tol", type=float, default=1e-10, help="identically-zero tolerance")
    ap.add_argument("--grid", default=None, help="override window resolution, NX,NY")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_system_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--example", choices=EXAMPLE_IDS, default=None)
        p.add_argument("--config", default=None, help="TOML config path")
        return p

    add_system_cmd("decompose", "Helmholtz decomposition")
    add_system_cmd("transform", "transformed decomposition under the mapping")
    add_system_cmd("check-hamiltonian", "criterion I/II report")
    add_system_cmd("exclude-orbits", "closed-orbit exclusion regions")
    add_system_cmd("find-orbits", "closed-orbit search")
    add_system_cmd("simulate", "stochastic ensemble")

    f2 = sub.add_parser("fig2", help="coupled-oscillator Hamiltonian grids")
    f2.add_argument("--J", required=True, help="comma-separated positive J values")
    f2.add_argument("--K", required=True, help="comma-separated K values")
    f2.add_argument("--n", type=int, default=256)

    f3 = sub.add_parser("fig3", help="trajectories + singular curves")
    f3.add_argument("example", choices=("harmonic", "vanderpol", "duffing"))
    f3.add_argument("--alpha", type=float, default=None)

    ex = sub.add_parser("example", help="materialize a built-in example")
    ex.add_argument("id", choices=EXAMPLE_IDS)
    return ap


def _load_system(args) -> SystemConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    elif getattr(args, "example", None):
        cfg = example_config(args.example)
    else:
        raise ConfigError("specify --example <id> or --config <file>")
    grid = None
    if args.grid:
        try:
            nx, ny = (int(v) for v in args.grid.split(","))
        except ValueError:
            raise ConfigError(f"bad --grid value {args.grid!r}") from None
        grid = (nx, ny)
    return cfg.with_overrides(seed=args.seed, grid=grid)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out = args.out
    try:
        os.makedirs(out, exist_ok=True)
        if args.command == "fig2":
            j_list = [float(v) for v in args.J.split(",")]
            k_list = [float(v) for v in args.K.split(",")]
            cmd_fig2(j_list, k_list, out, args.n)
        elif args.command == "fig3":
            cmd_fig3(args.example, out, args.alpha)
        elif args.command == "example":
            cmd_example(args.id, out, args.tol)
        else:
            cfg = _load_system(args)
            _dispatch(args.command, cfg, out, args.tol)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except PlanarflowError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
