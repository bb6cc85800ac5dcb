"""Flat key=value experiment configuration.

One ``key = value`` assignment per line, ``#`` to end of line is comment,
no sections and no nesting. The format stays this dumb on purpose: files
diff cleanly, and the resolved configuration serializes to a canonical
text whose hash identifies the experiment.

Every mode has its own key table with defaults, so ``mode = collapse`` on
its own is already a complete runnable config. Validation happens wholly
at load time: cross-field relations are checked (and derived values like
N_c = n_a*lam^3 filled in), then the actual domain objects are built once
and thrown away, so a config that loads cannot fail construction later.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Callable

from lecollapse.engine import CollapseSetup, SlipParams
from lecollapse.exact import LatticeModel
from lecollapse.fokker_planck import (
    FieldSummary,
    FPDensity,
    SimplexGrid,
    field_summary,
    stable_step,
)
from lecollapse.wave import Grid, KineticParams, ScalarFieldSet, seed_field

import numpy as np

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MODES",
    "load_config",
    "build_lattice_model",
    "build_wave_setup",
    "build_collapse_setup",
    "build_fp_setup",
    "build_compare_setup",
]

MODES = ("exact", "wave", "collapse", "fp", "sweep", "compare")
FORMATS = ("csv", "json", "svg")


class ConfigError(ValueError):
    """Unreadable, unparsable, or inconsistent configuration."""


# ---------------------------------------------------------------- parsing

def _int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ValueError(f"expected an integer, got {s!r}") from None


def _float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ValueError(f"expected a number, got {s!r}") from None
    if math.isnan(v):
        raise ValueError("nan is not a valid parameter value")
    return v


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true or false, got {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    parts = [p.strip() for p in s.split(",")]
    if not all(parts):
        raise ValueError(f"expected comma-separated numbers, got {s!r}")
    return tuple(_float(p) for p in parts)


def _ints(s: str) -> tuple[int, ...]:
    parts = [p.strip() for p in s.split(",")]
    if not all(parts):
        raise ValueError(f"expected comma-separated integers, got {s!r}")
    return tuple(_int(p) for p in parts)


def _seed_range(s: str) -> tuple[int, ...]:
    m = re.fullmatch(r"(-?\d+)\s*\.\.\s*(-?\d+)", s)
    if m is None:
        raise ValueError(f"expected a seed range like 0..9, got {s!r}")
    lo, hi = int(m.group(1)), int(m.group(2))
    if hi < lo:
        raise ValueError(f"seed range {s!r} runs backwards")
    return tuple(range(lo, hi + 1))


def _formats(s: str) -> tuple[str, ...]:
    names = tuple(p.strip() for p in s.split(","))
    for name in names:
        if name not in FORMATS:
            raise ValueError(
                f"unknown format {name!r}: choose from {', '.join(FORMATS)}"
            )
    # keep the canonical order regardless of how the user wrote them
    return tuple(f for f in FORMATS if f in names)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {options}, got {s!r}")
        return s

    return parse


_REQUIRED = object()


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], object]
    default: object = _REQUIRED


# Key tables. Shared fragments first; each mode's table is the complete
# set of parameter keys it accepts (common keys handled separately).

_KINETIC = {
    "lam": _Key(_float, 1.0),
    "tau": _Key(_float, 1.0),
    "d_coeff": _Key(_float, None),
}

_SLIPS = {
    **_KINETIC,
    "w": _Key(_float, 0.4),
    "n_a": _Key(_float, 100.0),
    "n_c": _Key(_float, None),
    "rate_calibration": _Key(_float, 1.0),
    "absorb_floor": _Key(_float, 1e-9),
}

_EXACT_KEYS = {
    "sites": _Key(_int, 3),
    "atoms": _Key(_int, 2),
    "channels": _Key(_int, 1),
    "hop_amplitude": _Key(_float, 1.0),
    "u_strength": _Key(_float, 0.8),
    "v_strength": _Key(_float, 0.5),
    "cross_channel_coupling": _Key(_choice("diagonal", "none"), "diagonal"),
    "bosonic": _Key(_bool, True),
    "t_final": _Key(_float, 20.0),
    "dt": _Key(_float, None),
    "record_every": _Key(_int, 10),
    "cell": _Key(_ints, None),
}

_WAVE_KEYS = {
    **_KINETIC,
    "extent": _Key(_floats, (400.0,)),
    "spacing": _Key(_float, 0.125),
    "seed_region": _Key(_floats, (0.0, 2.0)),
    "inside": _Key(_float, 1.0),
    "dt_fraction": _Key(_float, 0.2),
    "t_final": _Key(_float, 60.0),
    "record_every": _Key(_int, 10),
    "transient": _Key(_float, None),
}

_COLLAPSE_KEYS = {
    **_SLIPS,
    # desk-scale default: strong enough slip statistics to absorb well
    # inside the step budget; individual slips are aggregated, not resolved
    "rate_calibration": _Key(_float, 5000.0),
    "absorb_floor": _Key(_float, 1e-5),
    "extent": _Key(_floats, (32.0,)),
    "spacing": _Key(_float, 0.25),
    "p0": _Key(_floats, (0.3, 0.7)),
    "dt": _Key(_float, 0.04),
    "max_steps": _Key(_int, 20000),
    "f_init": _Key(_float, None),
    # None means auto: fronts advance when seeded, a uniform background
    # stays frozen (growth would saturate f -> 1 and starve the slips)
    "advance_fields": _Key(_bool, None),
    "record_every": _Key(_int, 0),
}

_FP_KEYS = {
    **_SLIPS,
    "channels": _Key(_int, 2),
    "resolution": _Key(_int, 100),
    "p0": _Key(_floats, (0.5, 0.5)),
    "width_cells": _Key(_float, 2.0),
    "f_init": _Key(_float, 0.4),
    "extent": _Key(_floats, (16.0,)),
    "spacing": _Key(_float, 0.25),
    "dt_fraction": _Key(_float, 0.5),
    "n_steps": _Key(_int, 2000),
    "snapshot_every": _Key(_int, 0),
    "current_every": _Key(_int, 10),
}

_COMPARE_KEYS = {
    **_SLIPS,
    "extent": _Key(_floats, (16.0,)),
    "spacing": _Key(_float, 0.25),
    "p0": _Key(_floats, (0.5, 0.5)),
    "dt": _Key(_float, 0.005),
    "f_init": _Key(_float, 0.4),
    "advance_fields": _Key(_bool, False),
    "resolution": _Key(_int, 100),
    "width_cells": _Key(_float, 2.0),
    "dt_fraction": _Key(_float, 0.5),
    "t_final": _Key(_float, 5.0),
    "n_runs": _Key(_int, 1000),
    "boundary_cells": _Key(_int, 1),
}

_MODE_KEYS = {
    "exact": _EXACT_KEYS,
    "wave": _WAVE_KEYS,
    "collapse": _COLLAPSE_KEYS,
    "fp": _FP_KEYS,
    "sweep": _COLLAPSE_KEYS,
    "compare": _COMPARE_KEYS,
}

# per-channel keys matched by pattern rather than listed in the tables
_DYNAMIC = {
    "exact": (re.compile(r"track_(\d+)"), _ints),
    "collapse": (re.compile(r"seed_region_(\d+)"), _floats),
    "sweep": (re.compile(r"seed_region_(\d+)"), _floats),
    "compare": (re.compile(r"seed_region_(\d+)"), _floats),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment: mode, seeds, outputs, parameters.

    ``params`` holds plain values only (defaults resolved, derived
    quantities filled in); the ``build_*`` functions turn them into the
    domain objects of the selected module. ``source`` is the canonical
    serialization whose sha256 identifies the experiment; the output
    directory is deliberately excluded so moving results does not change
    their identity.
    """

    mode: str
    seeds: tuple[int, ...]
    out_dir: str
    formats: tuple[str, ...]
    params: dict
    source: str

    @property
    def seed(self) -> int:
        return self.seeds[0]

    def config_hash(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()


# ------------------------------------------------------------- file layer

def _parse_text(text: str) -> dict[str, tuple[str, str]]:
    """Raw key -> (value, location) with comments stripped."""
    entries: dict[str, tuple[str, str]] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw!r}")
        if not value:
            raise ConfigError(f"line {n}: empty value for key {key!r}")
        if key in entries:
            raise ConfigError(
                f"line {n}: duplicate key {key!r} (already set at "
                f"{entries[key][1]})"
            )
        entries[key] = (value, f"line {n}")
    return entries


def _value_text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_value_text(x) for x in v)
    return str(v)


def _canonical(mode, seeds, formats, params) -> str:
    lines = [f"mode = {mode}"]
    if len(seeds) == 1:
        lines.append(f"seed = {seeds[0]}")
    else:
        lines.append(f"seeds = {seeds[0]}..{seeds[-1]}")
    lines.append(f"formats = {','.join(formats)}")
    for key in sorted(params):
        if params[key] is not None:
            lines.append(f"{key} = {_value_text(params[key])}")
    return "\n".join(lines) + "\n"


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Load, override, validate, and derive; any failure is a ConfigError.

    ``overrides`` maps key names to raw value strings exactly as they
    would appear in the file; they replace file entries and are reported
    as coming from the command line. ``path`` may be None for an
    all-defaults config driven purely by overrides.
    """
    if path is None:
        text = ""
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    entries = _parse_text(text)
    overrides = dict(overrides or {})
    if "mode" in overrides and "mode" in entries \
            and entries["mode"][0] != overrides["mode"]:
        raise ConfigError(
            f"{entries['mode'][1]}: config file says mode = "
            f"{entries['mode'][0]} but the command asked for "
            f"{overrides['mode']}"
        )
    for key, value in overrides.items():
        entries[key] = (str(value), "command line")

    def take(key):
        return entries.pop(key, (None, None))

    mode_raw, mode_loc = take("mode")
    if mode_raw is None:
        raise ConfigError("mode is required (exact, wave, collapse, fp, "
                          "sweep, or compare)")
    if mode_raw not in MODES:
        raise ConfigError(f"{mode_loc}: unknown mode {mode_raw!r}")
    mode = mode_raw

    out_raw, _ = take("out")
    out_dir = out_raw if out_raw is not None else "runs"

    fmt_raw, fmt_loc = take("formats")
    try:
        formats = _formats(fmt_raw) if fmt_raw is not None else ("csv", "json")
    except ValueError as exc:
        raise ConfigError(f"{fmt_loc}: formats: {exc}") from None

    seed_raw, seed_loc = take("seed")
    seeds_raw, seeds_loc = take("seeds")
    if mode == "sweep":
        if seed_raw is not None:
            raise ConfigError(
                f"{seed_loc}: sweep takes a seed range "
                "(seeds = A..B), not a single seed"
            )
        try:
            seeds = _seed_range(seeds_raw) if seeds_raw is not None \
                else tuple(range(10))
        except ValueError as exc:
            raise ConfigError(f"{seeds_loc}: seeds: {exc}") from None
    else:
        if seeds_raw is not None:
            raise ConfigError(
                f"{seeds_loc}: a seed range only makes sense for sweep; "
                f"{mode} takes seed = N"
            )
        try:
            seeds = (_int(seed_raw),) if seed_raw is not None else (0,)
        except ValueError as exc:
            raise ConfigError(f"{seed_loc}: seed: {exc}") from None

    trajectory_raw, traj_loc = take("trajectory")
    if trajectory_raw is not None and mode not in ("collapse", "sweep"):
        raise ConfigError(
            f"{traj_loc}: trajectory logging applies to collapse and "
            f"sweep, not {mode}"
        )

    table = _MODE_KEYS[mode]
    dynamic = _DYNAMIC.get(mode)
    params: dict = {}
    for key, (value, loc) in entries.items():
        if key in table:
            parse = table[key].parse
        elif dynamic is not None and dynamic[0].fullmatch(key):
            parse = dynamic[1]
        else:
            raise ConfigError(f"{loc}: unknown key {key!r} for mode {mode}")
        try:
            params[key] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{loc}: {key}: {exc}") from None
    for key, spec in table.items():
        if key not in params:
            if spec.default is _REQUIRED:
                raise ConfigError(f"mode {mode} requires key {key!r}")
            params[key] = spec.default

    if trajectory_raw is not None and _bool(trajectory_raw):
        params["record_every"] = max(1, params["record_every"])

    params = _VALIDATORS[mode](params)
    source = _canonical(mode, seeds, formats, params)
    config = ExperimentConfig(
        mode=mode,
        seeds=seeds,
        out_dir=out_dir,
        formats=formats,
        params=params,
        source=source,
    )
    _BUILDERS[mode](config)  # prove constructibility now, not mid-run
    return config


# ----------------------------------------------------------- validation

def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _check_kinetics(params: dict) -> None:
    """Positivity plus the D = lam^2/(6*tau) consistency relation."""
    _require(params["lam"] > 0, "lam must be positive")
    _require(params["tau"] > 0, "tau must be positive")
    derived = params["lam"] ** 2 / (6.0 * params["tau"])
    given = params["d_coeff"]
    if given is not None:
        if abs(given - derived) > 1e-9 * max(abs(given), derived):
            raise ConfigError(
                f"d_coeff = {given} is inconsistent with lam and tau: "
                f"D = lam^2/(6*tau) gives {derived}"
            )
    params["d_coeff"] = derived


def _check_slips(params: dict) -> None:
    _check_kinetics(params)
    _require(params["w"] > 0, "w must be positive")
    _require(params["n_a"] > 0, "n_a must be positive")
    _require(params["rate_calibration"] > 0,
             "rate_calibration must be positive")
    _require(0 < params["absorb_floor"] < 1,
             "absorb_floor must lie strictly between 0 and 1")
    derived = params["n_a"] * params["lam"] ** 3
    given = params["n_c"]
    if given is not None:
        if abs(given - derived) > 1e-9 * max(abs(given), derived):
            raise ConfigError(
                f"n_c = {given} is inconsistent with n_a and lam: "
                f"N_c = n_a*lam^3 gives {derived}"
            )
    params["n_c"] = derived


def _check_p0(params: dict) -> None:
    p0 = params["p0"]
    _require(len(p0) >= 2, "p0 needs at least two channels")
    _require(all(x >= 0 for x in p0), "p0 entries must be nonnegative")
    _require(abs(sum(p0) - 1.0) <= 1e-9, "p0 must sum to 1")


def _seed_region_keys(params: dict) -> list[str]:
    return sorted(
        (k for k in params if re.fullmatch(r"seed_region_\d+", k)),
        key=lambda k: int(k.rsplit("_", 1)[1]),
    )


def _check_regions(params: dict, dims: int) -> None:
    """Seed-region bookkeeping for the collapse-style modes.

    Exactly one of {seed regions, f_init} survives; with neither given
    the run falls back to a uniform f_init = 0.4 background. An
    advance_fields of None resolves here: seeded fronts advance, a
    uniform background stays frozen. Letting growth run on a uniform
    background would saturate f at 1 in a few tau, drive f0 to zero and
    freeze the walk mid-flight, so that combination must be opted into.
    """
    channels = len(params["p0"])
    region_keys = _seed_region_keys(params)
    if params["f_init"] is None and not region_keys:
        params["f_init"] = 0.4
    if params["advance_fields"] is None:
        params["advance_fields"] = bool(region_keys)
    if params["f_init"] is not None:
        _require(
            not region_keys,
            "give either seed_region_k or f_init, not both",
        )
        _require(0.0 <= params["f_init"] <= 1.0,
                 "f_init must lie in [0, 1]")
        return
    expected = [f"seed_region_{k}" for k in range(1, channels + 1)]
    if region_keys != expected:
        raise ConfigError(
            f"need exactly seed_region_1..seed_region_{channels}, "
            f"got {', '.join(region_keys)}"
        )
    for key in region_keys:
        box = params[key]
        if len(box) != 2 * dims:
            raise ConfigError(
                f"{key} needs {2 * dims} numbers "
                f"(lo,hi per axis), got {len(box)}"
            )
        for axis in range(dims):
            lo, hi = box[2 * axis], box[2 * axis + 1]
            if not 0.0 <= lo < hi <= params["extent"][axis]:
                raise ConfigError(
                    f"{key}: interval ({lo}, {hi}) does not fit in "
                    f"axis {axis} extent {params['extent'][axis]}"
                )


def _check_grid(params: dict) -> None:
    _require(params["spacing"] > 0, "spacing must be positive")
    _require(all(e > 0 for e in params["extent"]),
             "extent entries must be positive")
    _require(1 <= len(params["extent"]) <= 3,
             "extent needs one to three axes")


def _validate_exact(params: dict) -> dict:
    _require(params["sites"] >= 1, "sites must be at least 1")
    _require(params["atoms"] >= 1, "atoms must be at least 1")
    _require(params["channels"] >= 1, "channels must be at least 1")
    _require(params["t_final"] > 0, "t_final must be positive")
    _require(params["record_every"] >= 1, "record_every must be at least 1")
    if params["dt"] is not None:
        _require(params["dt"] > 0, "dt must be positive")
    track_keys = sorted(
        (k for k in params if re.fullmatch(r"track_\d+", k)),
        key=lambda k: int(k.rsplit("_", 1)[1]),
    )
    expected = [f"track_{k}" for k in range(1, params["channels"] + 1)]
    if not track_keys and params["channels"] == 1:
        params["track_1"] = (0,)
    elif track_keys != expected:
        raise ConfigError(
            f"need exactly track_1..track_{params['channels']}, "
            f"got {', '.join(track_keys) or 'none'}"
        )
    if params["cell"] is not None:
        for s in params["cell"]:
            _require(0 <= s < params["sites"],
                     f"cell site {s} outside 0..{params['sites'] - 1}")
    return params


def _validate_wave(params: dict) -> dict:
    _check_kinetics(params)
    _check_grid(params)
    _require(0 < params["dt_fraction"] <= 1.0,
             "dt_fraction must lie in (0, 1]")
    _require(params["t_final"] > 0, "t_final must be positive")
    _require(params["record_every"] >= 1, "record_every must be at least 1")
    _require(0.0 <= params["inside"] <= 1.0, "inside must lie in [0, 1]")
    if params["transient"] is not None:
        _require(params["transient"] >= 0, "transient must be nonnegative")
    dims = len(params["extent"])
    box = params["seed_region"]
    if len(box) != 2 * dims:
        raise ConfigError(
            f"seed_region needs {2 * dims} numbers (lo,hi per axis), "
            f"got {len(box)}"
        )
    return params


def _validate_collapse(params: dict) -> dict:
    _check_slips(params)
    _check_grid(params)
    _check_p0(params)
    _require(params["dt"] > 0, "dt must be positive")
    _require(params["max_steps"] >= 1, "max_steps must be at least 1")
    _require(params["record_every"] >= 0, "record_every must be nonnegative")
    _check_regions(params, len(params["extent"]))
    return params


def _validate_fp(params: dict) -> dict:
    _check_slips(params)
    _check_grid(params)
    _check_p0(params)
    _require(params["channels"] in (2, 3), "channels must be 2 or 3")
    _require(len(params["p0"]) == params["channels"],
             "p0 length must equal channels")
    _require(all(0.0 < x < 1.0 for x in params["p0"]),
             "fp needs p0 strictly inside the simplex")
    _require(params["resolution"] >= 4, "resolution must be at least 4")
    _require(params["width_cells"] > 0, "width_cells must be positive")
    _require(0.0 < params["f_init"] < 1.0,
             "f_init must lie strictly in (0, 1)")
    _require(0 < params["dt_fraction"] <= 1.0,
             "dt_fraction must lie in (0, 1]")
    _require(params["n_steps"] >= 1, "n_steps must be at least 1")
    _require(params["snapshot_every"] >= 0,
             "snapshot_every must be nonnegative")
    _require(params["current_every"] >= 1,
             "current_every must be at least 1")
    return params


def _validate_compare(params: dict) -> dict:
    _check_slips(params)
    _check_grid(params)
    _check_p0(params)
    _require(len(params["p0"]) in (2, 3),
             "compare supports two or three channels")
    _require(all(0.0 < x < 1.0 for x in params["p0"]),
             "compare needs p0 strictly inside the simplex")
    if _seed_region_keys(params):
        raise ConfigError(
            "compare requires the uniform f_init background, "
            "not seed regions"
        )
    _require(0.0 < params["f_init"] < 1.0,
             "f_init must lie strictly in (0, 1)")
    if params["advance_fields"]:
        raise ConfigError(
            "compare requires advance_fields = false: the diffusion "
            "solver assumes the frozen uniform background"
        )
    _require(params["dt"] > 0, "dt must be positive")
    _require(params["t_final"] >= params["dt"],
             "t_final must cover at least one step")
    _require(params["resolution"] >= 4, "resolution must be at least 4")
    _require(params["width_cells"] > 0, "width_cells must be positive")
    _require(0 < params["dt_fraction"] <= 1.0,
             "dt_fraction must lie in (0, 1]")
    _require(params["n_runs"] >= 100,
             "compare needs at least 100 runs for a meaningful histogram")
    _require(params["boundary_cells"] >= 1,
             "boundary_cells must be at least 1")
    return params


_VALIDATORS = {
    "exact": _validate_exact,
    "wave": _validate_wave,
    "collapse": _validate_collapse,
    "fp": _validate_fp,
    "sweep": _validate_collapse,
    "compare": _validate_compare,
}


# -------------------------------------------------------------- builders

def _build(mode: str, make):
    """Run a constructor, converting its ValueErrors into ConfigErrors."""
    try:
        return make()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid {mode} parameters: {exc}") from None


def build_lattice_model(config: ExperimentConfig) -> LatticeModel:
    p = config.params
    tracks = tuple(
        p[f"track_{k}"] for k in range(1, p["channels"] + 1)
    )
    return _build("exact", lambda: LatticeModel(
        sites=p["sites"],
        atoms=p["atoms"],
        channels=p["channels"],
        hop_amplitude=p["hop_amplitude"],
        u_strength=p["u_strength"],
        v_strength=p["v_strength"],
        a_tracks=tracks,
        bosonic=p["bosonic"],
        cross_channel_coupling=p["cross_channel_coupling"],
    ))


def build_wave_setup(config: ExperimentConfig):
    """(KineticParams, Grid, initial field) for the wave mode."""
    p = config.params

    def make():
        kin = KineticParams(lam=p["lam"], tau=p["tau"])
        grid = Grid(extent=p["extent"], spacing=p["spacing"])
        grid.check_resolution(kin)
        box = p["seed_region"]
        region = tuple(
            (box[2 * a], box[2 * a + 1]) for a in range(grid.dims)
        )
        f = seed_field(grid, region, inside=p["inside"])
        return kin, grid, f

    return _build("wave", make)


def _regions_from_params(params: dict, dims: int):
    keys = _seed_region_keys(params)
    if not keys:
        return None
    out = []
    for key in keys:
        box = params[key]
        out.append(tuple((box[2 * a], box[2 * a + 1]) for a in range(dims)))
    return tuple(out)


def _slip_params(params: dict) -> SlipParams:
    return SlipParams(
        w=params["w"],
        tau=params["tau"],
        lam=params["lam"],
        n_a=params["n_a"],
        n_c=params["n_c"],
        rate_calibration=params["rate_calibration"],
        absorb_floor=params["absorb_floor"],
    )


def build_collapse_setup(
    config: ExperimentConfig, max_steps: int | None = None
) -> CollapseSetup:
    p = config.params

    def make():
        kin = KineticParams(lam=p["lam"], tau=p["tau"])
        grid = Grid(extent=p["extent"], spacing=p["spacing"])
        return CollapseSetup(
            kinetics=kin,
            slips=_slip_params(p),
            grid=grid,
            p0=p["p0"],
            dt=p["dt"],
            max_steps=p["max_steps"] if max_steps is None else max_steps,
            seed_regions=_regions_from_params(p, grid.dims),
            f_init=p["f_init"],
            advance_fields=p["advance_fields"],
            record_every=p["record_every"],
        )

    return _build(config.mode, make)


def _uniform_summary(params: dict, channels: int) -> FieldSummary:
    """Overlap of a uniform f_init background, shared by fp and compare."""
    kin = KineticParams(lam=params["lam"], tau=params["tau"])
    grid = Grid(extent=params["extent"], spacing=params["spacing"])
    grid.check_resolution(kin)
    f = np.full((channels,) + grid.shape, float(params["f_init"]))
    fields = ScalarFieldSet(grid, f, np.asarray(params["p0"]))
    return field_summary(fields, _slip_params(params))


def build_fp_setup(config: ExperimentConfig):
    """(grid, initial density, summary, slip params, dt) for fp mode."""
    p = config.params

    def make():
        grid = SimplexGrid(channels=p["channels"],
                           resolution=p["resolution"])
        summary = _uniform_summary(p, p["channels"])
        slips = _slip_params(p)
        density = FPDensity.near_delta(grid, np.asarray(p["p0"]),
                                       width_cells=p["width_cells"])
        bound = stable_step(grid, summary, slips)
        dt = p["dt_fraction"] * bound if np.isfinite(bound) else p["tau"]
        return grid, density, summary, slips, dt

    return _build("fp", make)


def build_compare_setup(config: ExperimentConfig):
    """Matched (CollapseSetup, fp pieces, step counts) for compare mode.

    Both sides run to the same t_final: the engine in n_mc steps of the
    configured dt, the density in however many stability-bounded steps
    cover the interval exactly.
    """
    p = config.params

    def make():
        n_mc = max(1, int(round(p["t_final"] / p["dt"])))
        kin = KineticParams(lam=p["lam"], tau=p["tau"])
        grid = Grid(extent=p["extent"], spacing=p["spacing"])
        setup = CollapseSetup(
            kinetics=kin,
            slips=_slip_params(p),
            grid=grid,
            p0=p["p0"],
            dt=p["dt"],
            max_steps=n_mc,
            f_init=p["f_init"],
            advance_fields=False,
        )
        channels = len(p["p0"])
        sgrid = SimplexGrid(channels=channels, resolution=p["resolution"])
        summary = _uniform_summary(p, channels)
        density = FPDensity.near_delta(sgrid, np.asarray(p["p0"]),
                                       width_cells=p["width_cells"])
        bound = stable_step(sgrid, summary, setup.slips)
        if np.isfinite(bound):
            n_fp = max(1, math.ceil(p["t_final"]
                                    / (p["dt_fraction"] * bound)))
        else:
            n_fp = 1
        fp_dt = p["t_final"] / n_fp
        return setup, sgrid, density, summary, fp_dt, n_fp

    return _build("compare", make)


_BUILDERS = {
    "exact": build_lattice_model,
    "wave": build_wave_setup,
    "collapse": build_collapse_setup,
    "fp": build_fp_setup,
    "sweep": build_collapse_setup,
    "compare": build_compare_setup,
}
