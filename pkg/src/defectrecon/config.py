"""Experiment configuration: one YAML document drives data generation and
reconstruction so ground truth and inversion settings live side by side.

Parsing is strict: unknown keys are rejected, domain violations name the
offending key path, and YAML syntax errors carry the line number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .datagen import DefectSpec
from .grid import SIDES, check_sides, GridError
from .potentials import PotentialKind
from .reconstruction import ArmijoParams, ReconParams, default_eps_schedule


class ConfigError(ValueError):
    """Invalid configuration; message names the offending key path."""


def _require_map(obj, path):
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return dict(obj)


def _reject_unknown(d, path):
    if d:
        key = sorted(str(k) for k in d)[0]
        raise ConfigError(f"{path}.{key}: unknown key")


def _number(d, key, path, default, kind=float):
    if key not in d:
        return default
    val = d.pop(key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {val!r}")
    if kind is int:
        if isinstance(val, float) and not float(val).is_integer():
            raise ConfigError(f"{path}.{key}: expected an integer, got {val!r}")
        return int(val)
    return float(val)


def _string(d, key, path, default):
    if key not in d:
        return default
    val = d.pop(key)
    if not isinstance(val, str):
        raise ConfigError(f"{path}.{key}: expected a string, got {val!r}")
    return val


@dataclass
class DataConfig:
    cracks: tuple = ()
    cavities: tuple = ()
    electrodes: tuple = ()
    refine: int = 8
    eta: float = 1e-8
    measurement_points: int = 64
    noise_level_f: float = 0.0
    noise_level_g: float = 0.0
    seed: int = 1
    profile_shape: str = "plus"
    electrode_center: float = 0.5
    electrode_width: float = 0.5
    amplitude: float = 1.0

    def defect_spec(self):
        return DefectSpec(cracks=self.cracks, cavities=self.cavities)


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("csv", "pgm")


@dataclass
class ExperimentConfig:
    nx: int
    ny: int
    width: float
    height: float
    params: ReconParams
    initial_value: float
    data: DataConfig
    output: OutputConfig

    def build_grid(self):
        from .grid import build_grid
        return build_grid(self.nx, self.ny, self.width, self.height)


def _parse_grid(section):
    d = _require_map(section, "grid")
    if "nx" not in d or "ny" not in d:
        raise ConfigError("grid: nx and ny are required")
    nx = _number(d, "nx", "grid", None, int)
    ny = _number(d, "ny", "grid", None, int)
    width = _number(d, "width", "grid", 1.0)
    height = _number(d, "height", "grid", 1.0)
    _reject_unknown(d, "grid")
    if nx < 1 or ny < 1:
        raise ConfigError("grid.nx/grid.ny: must be >= 1")
    if not (width > 0.0 and height > 0.0):
        raise ConfigError("grid.width/grid.height: must be > 0")
    return nx, ny, width, height


def _parse_armijo(section):
    d = _require_map(section, "params.armijo")
    kw = {}
    for key, default in (("initial_step", 1.0), ("backtrack", 0.5),
                         ("sigma", 1e-4), ("growth", 1.2)):
        kw[key] = _number(d, key, "params.armijo", default)
    kw["max_reductions"] = _number(d, "max_reductions", "params.armijo", 5, int)
    _reject_unknown(d, "params.armijo")
    params = ArmijoParams(**kw)
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(f"params.armijo: {exc}") from exc
    return params


def _parse_schedule_pairs(raw):
    if not isinstance(raw, list) or not raw:
        raise ConfigError("params.eps_schedule: expected a non-empty list "
                          "of [eps, iterations] pairs")
    pairs = []
    for item in raw:
        if (not isinstance(item, (list, tuple)) or len(item) != 2
                or isinstance(item[0], bool) or isinstance(item[1], bool)
                or not isinstance(item[0], (int, float))
                or not isinstance(item[1], int)):
            raise ConfigError("params.eps_schedule: each entry must be "
                              "[eps (number), iterations (integer)]")
        pairs.append((float(item[0]), int(item[1])))
    return tuple(pairs)


def _parse_params(section, width, height):
    d = _require_map(section, "params")
    a = _number(d, "a", "params", 1.0)
    b = _number(d, "b", "params", 1.0)
    c = _number(d, "c", "params", 0.5)
    q1 = _number(d, "q1", "params", 0.25)
    pot_name = _string(d, "potential", "params", "single-well")
    try:
        potential = PotentialKind(pot_name)
    except ValueError:
        raise ConfigError(
            f"params.potential: unknown kind {pot_name!r}; expected "
            f"'single-well' or 'double-well'") from None
    riesz_alpha = _number(d, "riesz_alpha", "params",
                          1e-3 * (width ** 2 + height ** 2))
    initial_value = _number(d, "initial_value", "params", 0.5)
    if not (0.0 <= initial_value <= 1.0):
        raise ConfigError(f"params.initial_value: must lie in [0, 1], "
                          f"got {initial_value}")
    gamma_raw = d.pop("gamma", list(SIDES))
    if not isinstance(gamma_raw, list):
        raise ConfigError("params.gamma: expected a list of side labels")
    try:
        gamma = check_sides(gamma_raw)
    except GridError as exc:
        raise ConfigError(f"params.gamma: {exc}") from exc

    schedule_keys = [k for k in ("eps_start", "eps_end", "eps_stages",
                                 "iterations") if k in d]
    if "eps_schedule" in d:
        if schedule_keys:
            raise ConfigError(
                f"params.eps_schedule: conflicts with params.{schedule_keys[0]}; "
                f"give either an explicit schedule or the stage knobs")
        schedule = _parse_schedule_pairs(d.pop("eps_schedule"))
    else:
        eps_start = _number(d, "eps_start", "params", 2e-4)
        eps_end = _number(d, "eps_end", "params", None)
        stages = _number(d, "eps_stages", "params", 5, int)
        iterations = _number(d, "iterations", "params", None, int)
        if stages < 1:
            raise ConfigError(f"params.eps_stages: must be >= 1, got {stages}")
        schedule = default_eps_schedule(potential, stages=stages,
                                        eps_start=eps_start, eps_end=eps_end,
                                        total_iterations=iterations)
    armijo = _parse_armijo(d.pop("armijo", None))
    _reject_unknown(d, "params")

    params = ReconParams(a=a, b=b, c=c, q1=q1, potential=potential,
                         eps_schedule=schedule, riesz_alpha=riesz_alpha,
                         armijo=armijo, gamma=gamma)
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc
    return params, initial_value


def _parse_polylines(d, key, min_pts):
    raw = d.pop(key, [])
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ConfigError(f"data.{key}: expected a list of point lists")
    out = []
    for i, poly in enumerate(raw):
        if not isinstance(poly, list) or len(poly) < min_pts:
            raise ConfigError(f"data.{key}[{i}]: expected at least "
                              f"{min_pts} [x, y] points")
        pts = []
        for pt in poly:
            if (not isinstance(pt, (list, tuple)) or len(pt) != 2
                    or any(isinstance(v, bool) or not isinstance(v, (int, float))
                           for v in pt)):
                raise ConfigError(f"data.{key}[{i}]: each point must be [x, y]")
            pts.append([float(pt[0]), float(pt[1])])
        out.append(np.asarray(pts))
    return tuple(out)


def _parse_data(section, gamma):
    d = _require_map(section, "data")
    cracks = _parse_polylines(d, "cracks", 2)
    cavities = _parse_polylines(d, "cavities", 3)

    raw_el = d.pop("electrodes", None)
    if not isinstance(raw_el, list) or not raw_el:
        raise ConfigError("data.electrodes: at least one [sideA, sideB] "
                          "pair is required")
    electrodes = []
    for i, pair in enumerate(raw_el):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"data.electrodes[{i}]: expected [sideA, sideB]")
        sa, sb = pair
        for s in (sa, sb):
            if s not in SIDES:
                raise ConfigError(f"data.electrodes[{i}]: unknown side {s!r}")
            if s not in gamma:
                raise ConfigError(f"data.electrodes[{i}]: side {s!r} is not "
                                  f"part of gamma {tuple(gamma)}")
        if sa == sb:
            raise ConfigError(f"data.electrodes[{i}]: sides must differ")
        electrodes.append((sa, sb))

    kw = dict(
        refine=_number(d, "refine", "data", 8, int),
        eta=_number(d, "eta", "data", 1e-8),
        measurement_points=_number(d, "measurement_points", "data", 64, int),
        noise_level_f=_number(d, "noise_level_f", "data", 0.0),
        noise_level_g=_number(d, "noise_level_g", "data", 0.0),
        seed=_number(d, "seed", "data", 1, int),
        profile_shape=_string(d, "profile_shape", "data", "plus"),
        electrode_center=_number(d, "electrode_center", "data", 0.5),
        electrode_width=_number(d, "electrode_width", "data", 0.5),
        amplitude=_number(d, "amplitude", "data", 1.0),
    )
    _reject_unknown(d, "data")

    if kw["refine"] < 4:
        raise ConfigError(f"data.refine: must be >= 4, got {kw['refine']}")
    if not (0.0 < kw["eta"] <= 1e-4):
        raise ConfigError(f"data.eta: must lie in (0, 1e-4], got {kw['eta']}")
    if kw["measurement_points"] < 2:
        raise ConfigError("data.measurement_points: must be >= 2")
    if kw["noise_level_f"] < 0 or kw["noise_level_g"] < 0:
        raise ConfigError("data.noise_level_f/noise_level_g: must be >= 0")
    if kw["seed"] < 0:
        raise ConfigError("data.seed: must be >= 0")
    if kw["profile_shape"] not in ("plus", "flat"):
        raise ConfigError(f"data.profile_shape: expected 'plus' or 'flat', "
                          f"got {kw['profile_shape']!r}")
    ctr, wid = kw["electrode_center"], kw["electrode_width"]
    if not (0.0 < wid < 1.0):
        raise ConfigError(f"data.electrode_width: must lie in (0, 1), got {wid}")
    if ctr - wid / 2.0 < 0.0 or ctr + wid / 2.0 > 1.0:
        raise ConfigError(
            f"data.electrode_center: support "
            f"[{ctr - wid / 2.0:.4g}, {ctr + wid / 2.0:.4g}] overflows the side")
    if kw["amplitude"] == 0.0:
        raise ConfigError("data.amplitude: must be nonzero")

    cfg = DataConfig(cracks=cracks, cavities=cavities,
                     electrodes=tuple(electrodes), **kw)
    try:
        cfg.defect_spec()
    except ValueError as exc:
        raise ConfigError(f"data: {exc}") from exc
    return cfg


def _parse_output(section):
    d = _require_map(section, "output")
    directory = _string(d, "directory", "output", "out")
    raw = d.pop("formats", ["csv", "pgm"])
    if not isinstance(raw, list) or not raw:
        raise ConfigError("output.formats: expected a non-empty list")
    formats = []
    for fmt in raw:
        if fmt not in ("csv", "pgm"):
            raise ConfigError(f"output.formats: unknown format {fmt!r}")
        if fmt not in formats:
            formats.append(fmt)
    _reject_unknown(d, "output")
    return OutputConfig(directory, tuple(formats))


def parse_config(text):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ConfigError(
                f"syntax error at line {mark.line + 1}: "
                f"{getattr(exc, 'problem', exc)}") from exc
        raise ConfigError(f"syntax error: {exc}") from exc
    doc = _require_map(doc, "config")
    if not doc:
        raise ConfigError("config: empty document")

    grid_sec = doc.pop("grid", None)
    if grid_sec is None:
        raise ConfigError("grid: section is required")
    nx, ny, width, height = _parse_grid(grid_sec)
    params, initial_value = _parse_params(doc.pop("params", None), width, height)
    data = _parse_data(doc.pop("data", None), params.gamma)
    output = _parse_output(doc.pop("output", None))
    _reject_unknown(doc, "config")

    return ExperimentConfig(nx=nx, ny=ny, width=width, height=height,
                            params=params, initial_value=initial_value,
                            data=data, output=output)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
