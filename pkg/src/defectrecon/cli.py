"""Command-line entry points: generate / reconstruct / gradcheck / render.

Output directory resolution: --out flag, then the DEFECTRECON_OUT
environment variable, then the config's output.directory.  Exit codes:
0 success, 1 numerical failure (solver breakdown, failed check),
2 bad usage, config, or input files.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import os
import sys
import time

import numpy as np

from . import kernels
from .config import ConfigError, load_config
from .datagen import generate_suite
from .fem import ConvergenceError, CompatibilityError
from .grid import build_grid
from . import io as dio
from .reconstruction import (InternalConsistencyError, assemble_gradient,
                             boundary_data_from_dataset, directional_cost_derivative,
                             eval_cost, initial_phase, run_reconstruction,
                             solve_adjoints, solve_states, PhaseField)


class CliError(Exception):
    """Usage or input error; message is printed as the diagnostic."""


def _resolve_out(args, cfg):
    if getattr(args, "out", None):
        return args.out
    env = os.environ.get("DEFECTRECON_OUT")
    if env:
        return env
    return cfg.output.directory if cfg is not None else "."


def _load_config(args):
    try:
        return load_config(args.config)
    except FileNotFoundError:
        raise CliError(f"config file not found: {args.config}")
    except ConfigError as exc:
        raise CliError(f"invalid config {args.config}: {exc}")


def _config_sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _dataset_paths(outdir):
    return sorted(glob.glob(os.path.join(outdir, "dataset_*.csv")))


def cmd_generate(args):
    cfg = _load_config(args)
    outdir = _resolve_out(args, cfg)
    os.makedirs(outdir, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.data.seed
    t0 = time.perf_counter()
    coarse = cfg.build_grid()
    dc = cfg.data
    model, datasets = generate_suite(
        coarse, dc.defect_spec(), dc.electrodes, cfg.params.gamma,
        refine=dc.refine, eta=dc.eta, seed=seed,
        points_per_side=dc.measurement_points,
        noise_level_f=dc.noise_level_f, noise_level_g=dc.noise_level_g,
        center=dc.electrode_center, electrode_width=dc.electrode_width,
        amplitude=dc.amplitude, shape=dc.profile_shape)
    files = []
    for idx, ds in enumerate(datasets):
        name = f"dataset_{idx:02d}_{ds.electrodes[0]}-{ds.electrodes[1]}.csv"
        path = os.path.join(outdir, name)
        dio.write_dataset(ds, path)
        files.append(name)
        print(f"wrote {path} ({len(ds.s)} points, "
              f"electrodes {ds.electrodes[0]}->{ds.electrodes[1]})")
    marked = float(np.sum(model.grid.tri_area[model.conductivity < 1.0]))
    manifest = {
        "verb": "generate",
        "config_sha256": _config_sha256(args.config),
        "seed": int(seed),
        "noise_seeds": [int(ds.noise.seed) for ds in datasets],
        "backend": kernels.BACKEND,
        "fine_grid": {"nx": model.grid.nx, "ny": model.grid.ny,
                      "refine": model.refine, "eta": model.eta},
        "defect_cell_area": marked,
        "datasets": files,
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    mpath = os.path.join(outdir, "manifest_generate.json")
    dio.write_manifest(manifest, mpath)
    print(f"wrote {mpath}")
    return 0


def cmd_reconstruct(args):
    cfg = _load_config(args)
    outdir = _resolve_out(args, cfg)
    paths = _dataset_paths(outdir)
    if not paths:
        raise CliError(f"no dataset_*.csv files in {outdir}; "
                       f"run the generate verb first")
    t0 = time.perf_counter()
    grid = cfg.build_grid()
    datasets = []
    for p in paths:
        try:
            ds = dio.read_dataset(p)
        except (dio.DatasetFormatError, ValueError) as exc:
            raise CliError(f"bad dataset {p}: {exc}")
        datasets.append(boundary_data_from_dataset(grid, cfg.params.gamma, ds))

    initial = initial_phase(grid, cfg.initial_value)
    stage_values = {}

    def snapshot(rec, phase):
        stage_values[rec.stage] = phase.values.copy()

    final, history = run_reconstruction(grid, cfg.params, datasets, initial,
                                        callback=snapshot)

    fmts = cfg.output.formats
    files = []
    carried = initial.values
    for stage in range(len(cfg.params.eps_schedule)):
        carried = stage_values.get(stage, carried)
        ph = PhaseField(carried.copy(), initial.mask)
        files += dio.write_phase_field(grid, ph,
                                       os.path.join(outdir, f"phase_stage{stage + 1:02d}"),
                                       fmts)
    files += dio.write_phase_field(grid, final,
                                   os.path.join(outdir, "phase_final"), fmts)
    hpath = os.path.join(outdir, "history.csv")
    dio.write_history(history, hpath)
    files.append(hpath)

    stage_counts = [0] * len(cfg.params.eps_schedule)
    for rec in history:
        stage_counts[rec.stage] += 1
    if history:
        fc = history[-1].cost
    else:
        pack = solve_states(grid, final, cfg.params,
                            cfg.params.eps_schedule[0][0], datasets)
        fc = eval_cost(grid, final, cfg.params, cfg.params.eps_schedule[0][0],
                       datasets, pack)
    manifest = {
        "verb": "reconstruct",
        "config_sha256": _config_sha256(args.config),
        "datasets": [os.path.basename(p) for p in paths],
        "backend": kernels.BACKEND,
        "stage_iterations": stage_counts,
        "final_cost": {"total": fc.total, "fidelity": fc.fidelity,
                       "dirichlet": fc.dirichlet, "well": fc.well,
                       "gradient_term": fc.gradient_term},
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    mpath = os.path.join(outdir, "manifest_reconstruct.json")
    dio.write_manifest(manifest, mpath)
    print(f"ran {sum(stage_counts)} iterations over "
          f"{len(cfg.params.eps_schedule)} stages; final cost {fc.total:.6e}")
    for f in files:
        print(f"wrote {f if os.path.isabs(f) else os.path.join('', f)}")
    print(f"wrote {mpath}")
    return 0


ROUTE_TOL = 1e-8
FD_TOL = 1e-4
FD_STEP = 1e-5
FD_DIRECTIONS = 10


def cmd_gradcheck(args):
    cfg = _load_config(args)
    seed = args.seed if args.seed is not None else cfg.data.seed
    grid = cfg.build_grid()
    dc = cfg.data
    _, raw = generate_suite(
        grid, dc.defect_spec(), dc.electrodes, cfg.params.gamma,
        refine=dc.refine, eta=dc.eta, seed=seed,
        points_per_side=dc.measurement_points,
        noise_level_f=dc.noise_level_f, noise_level_g=dc.noise_level_g,
        center=dc.electrode_center, electrode_width=dc.electrode_width,
        amplitude=dc.amplitude, shape=dc.profile_shape)
    datasets = [boundary_data_from_dataset(grid, cfg.params.gamma, ds)
                for ds in raw]
    params = cfg.params
    eps = params.eps_schedule[0][0]

    rng = np.random.default_rng(seed)
    phase = initial_phase(grid, 0.5)
    free = ~phase.mask
    phase.values[free] = 0.2 + 0.6 * rng.random(int(free.sum()))

    pack = solve_states(grid, phase, params, eps, datasets)
    pack = solve_adjoints(grid, phase, params, eps, datasets, pack)
    grad = assemble_gradient(grid, phase, params, eps, datasets, pack)

    free_ids = np.flatnonzero(free)
    if len(free_ids) > 200:
        free_ids = rng.choice(free_ids, size=200, replace=False)
        free_ids.sort()
    worst = 0.0
    scale = 0.0
    for j in free_ids:
        e = np.zeros(grid.n_nodes)
        e[j] = 1.0
        dj = directional_cost_derivative(grid, phase, params, eps, datasets,
                                         pack, e)
        worst = max(worst, abs(grad[j] - dj))
        scale = max(scale, abs(grad[j]), abs(dj))
    route_rel = worst / scale if scale > 0 else 0.0
    route_ok = route_rel <= ROUTE_TOL
    print(f"gradcheck adjoint-vs-state-derivative: max relative discrepancy "
          f"{route_rel:.3e} over {len(free_ids)} nodes "
          f"(tol {ROUTE_TOL:.0e}): {'PASS' if route_ok else 'FAIL'}")

    def total_cost(ph):
        p = solve_states(grid, ph, params, eps, datasets)
        return eval_cost(grid, ph, params, eps, datasets, p).total

    fd_worst = 0.0
    for _ in range(FD_DIRECTIONS):
        d = np.zeros(grid.n_nodes)
        d[free] = rng.standard_normal(int(free.sum()))
        d /= np.linalg.norm(d)
        plus = PhaseField(phase.values + FD_STEP * d, phase.mask)
        minus = PhaseField(phase.values - FD_STEP * d, phase.mask)
        fd = (total_cost(plus) - total_cost(minus)) / (2.0 * FD_STEP)
        an = float(grad @ d)
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-300)
        fd_worst = max(fd_worst, rel)
    fd_ok = fd_worst <= FD_TOL
    print(f"gradcheck adjoint-vs-central-differences: max relative error "
          f"{fd_worst:.3e} over {FD_DIRECTIONS} directions at h={FD_STEP:.0e} "
          f"(tol {FD_TOL:.0e}): {'PASS' if fd_ok else 'FAIL'}")
    return 0 if (route_ok and fd_ok) else 1


def cmd_render(args):
    try:
        rows = dio.read_phase_csv(args.phase)
    except FileNotFoundError:
        raise CliError(f"phase file not found: {args.phase}")
    except ValueError as exc:
        raise CliError(f"bad phase file {args.phase}: {exc}")
    stem = os.path.splitext(os.path.basename(args.phase))[0]
    outdir = args.out if args.out else os.path.dirname(args.phase) or "."
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, stem + ".pgm")
    with open(path, "w", newline="\n") as fh:
        fh.write(dio.pgm_text(rows))
    print(f"wrote {path}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="defectrecon",
        description="Phase-field reconstruction of insulating defects "
                    "from boundary Cauchy data.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True,
                           help="YAML experiment configuration")
        p.add_argument("--out", default=None,
                       help="output directory (overrides DEFECTRECON_OUT "
                            "and the config)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")

    p = sub.add_parser("generate", help="simulate Cauchy datasets")
    common(p)
    p = sub.add_parser("reconstruct", help="run the phase-field inversion")
    common(p)
    p = sub.add_parser("gradcheck", help="verify the adjoint gradient")
    common(p)
    p = sub.add_parser("render", help="render a phase CSV to PGM")
    p.add_argument("--phase", required=True, help="phase-field CSV file")
    p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return 2
    handler = {"generate": cmd_generate, "reconstruct": cmd_reconstruct,
               "gradcheck": cmd_gradcheck, "render": cmd_render}[args.verb]
    try:
        return handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, CompatibilityError,
            InternalConsistencyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
