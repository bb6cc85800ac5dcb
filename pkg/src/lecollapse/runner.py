"""Experiment orchestration: dispatch, persistence, and the run manifest.

Each mode writes its own set of payload files into the output directory,
then ``manifest.json`` is written last as the commit marker: a manifest
that exists names every payload with its size and sha256, so a directory
whose manifest is missing or flagged partial is known to be incomplete.

Determinism contract: for a fixed (config, seed) the payload bytes are
identical across runs and machines. Floats are written with ``repr``,
which round-trips exactly and never exceeds 17 significant digits; JSON
is sorted and indented the same way everywhere; the only nondeterministic
manifest entries are the wall-clock fields.

File conventions: channels are numbered 1..K in every output (columns
p_1..p_K, winner 1..K or null), matching the math's subscripts rather
than the code's 0-based arrays.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import lecollapse
from lecollapse.config import (
    ExperimentConfig,
    build_collapse_setup,
    build_compare_setup,
    build_fp_setup,
    build_lattice_model,
    build_wave_setup,
)
from lecollapse.engine import (
    RunResult,
    born_statistics,
    run_collapse,
    run_ensemble,
)
from lecollapse.exact import (
    BranchState,
    LatticeBasis,
    build_branch_hamiltonian,
    default_timestep,
    evolve,
    le_occupation,
    local_probabilities,
    reconstruct_standard,
)
from lecollapse.fokker_planck import (
    boundary_current,
    compare_histogram,
    edge_mass,
    ensemble_histogram,
    fp_step,
)
from lecollapse.plotting import emit_plot
from lecollapse.wave import (
    FrontUndefinedError,
    front_position,
    front_speed,
    front_width,
    kpp_step,
)

__all__ = [
    "RunManifest",
    "run_experiment",
    "format_csv",
    "parse_csv",
    "read_csv",
    "write_json",
]


@dataclass(frozen=True)
class RunManifest:
    """What a finished experiment left behind, written last.

    ``outputs`` lists every payload file relative to the output directory
    with byte count and sha256. Two runs of one config agree on
    everything here except ``wall_clock``.
    """

    config_hash: str
    tool_version: str
    mode: str
    seeds: tuple[int, ...]
    status: str  # success | timeout | error
    partial: bool
    error: str | None
    wall_clock: dict
    outputs: tuple[dict, ...]

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "mode": self.mode,
            "seeds": list(self.seeds),
            "status": self.status,
            "partial": self.partial,
            "error": self.error,
            "wall_clock": self.wall_clock,
            "outputs": [dict(o) for o in self.outputs],
        }


# ------------------------------------------------------------ text layer

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_csv(text: str):
    """(header, float rows) back from format_csv output."""
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise ValueError("empty CSV text")
    header = lines[0].split(",")
    rows = [[float(c) for c in ln.split(",")] for ln in lines[1:]]
    return header, rows


def read_csv(path):
    return parse_csv(Path(path).read_text(encoding="utf-8"))


def write_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


class _Job:
    """One experiment's output directory plus format gating.

    The CSV helper always builds the text (the SVG emitter consumes it
    even when csv output is switched off) and writes it only when the
    format is requested.
    """

    def __init__(self, config: ExperimentConfig, out: Path):
        self.config = config
        self.out = out
        self.files: list[Path] = []
        self.clocks: dict[str, float] = {}

    def _record(self, name: str, text: str) -> None:
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        self.files.append(path)

    def csv(self, name: str, header, rows) -> str:
        text = format_csv(header, rows)
        if "csv" in self.config.formats:
            self._record(name, text)
        return text

    def json(self, name: str, obj) -> None:
        if "json" in self.config.formats:
            self._record(
                name, json.dumps(obj, indent=2, sort_keys=True) + "\n"
            )

    def svg(self, name: str, csv_text: str, kind: str) -> None:
        if "svg" in self.config.formats:
            self._record(name, emit_plot(csv_text, kind))


# ---------------------------------------------------------------- drivers

def _run_exact(job: _Job) -> str:
    p = job.config.params
    model = build_lattice_model(job.config)
    basis = LatticeBasis(model)
    h = build_branch_hamiltonian(model, basis)
    state = BranchState.from_standard(basis)
    dt = p["dt"] if p["dt"] is not None else default_timestep(h)
    n_steps = max(1, math.ceil(p["t_final"] / dt))
    cell = p["cell"] if p["cell"] is not None else tuple(range(model.sites))

    occ_names = [f"occupation_{r}" for r in range(model.channels + 1)]
    header = ["time", "norm", "hermitian_defect"] + occ_names + ["cross_term"]

    def row(s: BranchState):
        occ = [le_occupation(s, r) for r in range(model.channels + 1)]
        cross = local_probabilities(s, cell)[1]
        norm = float(np.linalg.norm(reconstruct_standard(s)))
        return [s.time, norm, h.hermitian_defect, *occ, cross]

    rows = [row(state)]
    done = 0
    while done < n_steps:
        chunk = min(p["record_every"], n_steps - done)
        state = evolve(state, h, dt, steps=chunk)
        done += chunk
        rows.append(row(state))

    job.csv("scalars.csv", header, rows)
    job.json("summary.json", {
        "sites": model.sites,
        "atoms": model.atoms,
        "channels": model.channels,
        "basis_size": basis.n_basis,
        "dt": dt,
        "n_steps": n_steps,
        "t_final": state.time,
        "hermitian_defect": h.hermitian_defect,
        "norm_initial": rows[0][1],
        "norm_final": rows[-1][1],
        "norm_drift": abs(rows[-1][1] - rows[0][1]),
        "occupations_final": rows[-1][3:3 + model.channels + 1],
        "cross_term_final": rows[-1][-1],
    })
    return "success"


def _run_wave(job: _Job) -> str:
    p = job.config.params
    kin, grid, f = build_wave_setup(job.config)
    dt = p["dt_fraction"] * grid.monotone_limit(kin)
    n_steps = max(1, math.ceil(p["t_final"] / dt))

    times, rows = [], []
    tracking = True

    def sample(step: int) -> None:
        nonlocal tracking
        if not tracking:
            return
        t = step * dt
        try:
            pos = front_position(f, grid)
            width = front_width(f, grid)
        except FrontUndefinedError:
            tracking = False  # saturated or empty; nothing left to track
            return
        speed = math.nan
        if times:
            speed = (pos - rows[-1][1]) / (t - times[-1])
        times.append(t)
        rows.append([t, pos, width, speed])

    sample(0)
    for step in range(1, n_steps + 1):
        f = kpp_step(f, grid, kin, dt)
        if step % p["record_every"] == 0 or step == n_steps:
            sample(step)

    front_text = job.csv(
        "front.csv", ["time", "position", "width", "speed_estimate"], rows
    )

    coords = grid.axis_coords(0)
    profile = f
    if grid.dims > 1:
        center = tuple(s // 2 for s in grid.shape[1:])
        profile = f[(slice(None),) + center]
    profile_text = job.csv(
        "profile.csv", ["position", "f"], list(zip(coords, profile))
    )

    summary = {
        "dt": dt,
        "n_steps": n_steps,
        "t_final": n_steps * dt,
        "kpp_speed": kin.kpp_speed,
        "transport_speed": kin.sound_speed,
        "front_samples": len(rows),
        "width_final": rows[-1][2] if rows else None,
        "speed": None,
        "speed_residual": None,
        "ratio_to_kpp": None,
        "ratio_to_transport": None,
        "fit_note": None,
    }
    try:
        fit = front_speed(times, [r[1] for r in rows], kin,
                          transient=p["transient"])
        summary.update({
            "speed": fit.speed,
            "speed_residual": fit.residual,
            "ratio_to_kpp": fit.speed / fit.kpp_speed,
            "ratio_to_transport": fit.speed / fit.transport_speed,
        })
    except ValueError as exc:
        summary["fit_note"] = str(exc)
    job.json("speed.json", summary)

    job.svg("front.svg", front_text, "front-trajectory")
    job.svg("profile.svg", profile_text, "field-profile")
    return "success"


def _result_json(result: RunResult) -> dict:
    return {
        "winner": None if result.winner is None else int(result.winner) + 1,
        "collapse_time": result.collapse_time,
        "slip_count": int(result.slip_count),
        "seed": int(result.seed),
        "p0": list(result.p0),
        "status": result.status,
    }


def _single_collapse(job: _Job, seed: int, suffix: str = "") -> RunResult:
    setup = build_collapse_setup(job.config)
    started = time.perf_counter()
    result = run_collapse(setup, seed)
    job.clocks[f"run{suffix}" if suffix else "run"] = (
        time.perf_counter() - started
    )
    job.json(f"run{suffix}.json", _result_json(result))
    if result.trajectory is not None:
        channels = len(result.p0)
        header = ["time"] + [f"p_{k}" for k in range(1, channels + 1)]
        text = job.csv(
            f"trajectory{suffix}.csv", header, result.trajectory.tolist()
        )
        job.svg(f"trajectory{suffix}.svg", text, "p-trajectory")
    return result


def _run_collapse(job: _Job) -> str:
    result = _single_collapse(job, job.config.seed)
    return "success" if result.status == "collapsed" else "timeout"


def _run_sweep(job: _Job) -> str:
    results = []
    for seed in job.config.seeds:
        results.append(_single_collapse(job, seed, suffix=f"_{seed:05d}"))

    p0 = job.config.params["p0"]
    channels = len(p0)
    counts = [0] * channels
    for r in results:
        if r.winner is not None:
            counts[r.winner] += 1
    resolved = sum(counts)
    aggregate = {
        "n_results": len(results),
        "n_resolved": resolved,
        "n_timeout": len(results) - resolved,
        "expected": list(p0),
        "counts": counts,
        "frequencies": [
            c / resolved if resolved else None for c in counts
        ],
        "wilson_low": None,
        "wilson_high": None,
        "chi_square": None,
        "p_value": None,
    }
    # the full interval-and-test block needs the aggregator's 100-run
    # floor; small sweeps still get honest counts
    if len(results) >= 100 and resolved:
        stats = born_statistics(results)
        aggregate.update({
            "wilson_low": list(stats.wilson_low),
            "wilson_high": list(stats.wilson_high),
            "chi_square": stats.chi_square,
            "p_value": stats.p_value,
        })
    job.json("born.json", aggregate)
    if any(r.status == "timeout" for r in results):
        return "timeout"
    return "success"


def _density_rows(density, grid):
    if grid.dims == 1:
        x = grid.centers()
        return ["p_1", "density"], list(zip(x, density.phi))
    x = grid.centers()
    valid = grid.valid()
    rows = []
    for i in range(grid.resolution):
        for j in range(grid.resolution):
            if valid[i, j]:
                rows.append([x[i], x[j], density.phi[i, j]])
    return ["p_1", "p_2", "density"], rows


def _run_fp(job: _Job) -> str:
    p = job.config.params
    grid, density, summary, slips, dt = build_fp_setup(job.config)

    def current_row(d):
        return [d.time, boundary_current(d, summary, slips),
                d.mass, d.clamped]

    currents = [current_row(density)]
    for step in range(1, p["n_steps"] + 1):
        density = fp_step(density, summary, slips, dt)
        if step % p["current_every"] == 0 or step == p["n_steps"]:
            currents.append(current_row(density))
        if p["snapshot_every"] and step % p["snapshot_every"] == 0 \
                and step != p["n_steps"]:
            header, rows = _density_rows(density, grid)
            job.csv(f"density_{step:06d}.csv", header, rows)

    header, rows = _density_rows(density, grid)
    density_text = job.csv("density.csv", header, rows)
    job.csv(
        "current.csv",
        ["time", "boundary_current", "mass", "clamped"],
        currents,
    )
    job.json("summary.json", {
        "channels": grid.channels,
        "resolution": grid.resolution,
        "dt": dt,
        "n_steps": p["n_steps"],
        "t_final": density.time,
        "overlap": list(summary.overlap),
        "mass": density.mass,
        "clamped": density.clamped,
        "edge_mass": edge_mass(density),
        "interior_mass": 1.0 - edge_mass(density),
        "boundary_current_final": currents[-1][1],
    })
    if grid.dims == 1:
        job.svg("density.svg", density_text, "histogram-vs-density")
    return "success"


def _run_compare(job: _Job) -> str:
    p = job.config.params
    setup, sgrid, density, summary, fp_dt, n_fp = \
        build_compare_setup(job.config)

    started = time.perf_counter()
    for _ in range(n_fp):
        density = fp_step(density, summary, setup.slips, fp_dt)
    job.clocks["fp"] = time.perf_counter() - started

    started = time.perf_counter()
    ensemble = run_ensemble(
        setup, job.config.seed, p["n_runs"],
        checkpoint_steps=(setup.max_steps,),
    )
    job.clocks["ensemble"] = time.perf_counter() - started

    probs = ensemble.checkpoint_p[-1]
    comparison = compare_histogram(
        density, probs, boundary_cells=p["boundary_cells"]
    )
    absorbed = sum(1 for r in ensemble.results if r.status == "collapsed")

    hist = ensemble_histogram(list(probs), sgrid)
    if sgrid.dims == 1:
        header = ["p_1", "density", "histogram"]
        rows = list(zip(sgrid.centers(), density.phi, hist))
    else:
        header = ["p_1", "p_2", "density", "histogram"]
        x = sgrid.centers()
        valid = sgrid.valid()
        rows = []
        for i in range(sgrid.resolution):
            for j in range(sgrid.resolution):
                if valid[i, j]:
                    rows.append([x[i], x[j],
                                 density.phi[i, j], hist[i, j]])
    hist_text = job.csv("histogram.csv", header, rows)

    job.json("comparison.json", {
        "total_variation": comparison.total_variation,
        "fp_boundary_mass": comparison.fp_boundary_mass,
        "mc_boundary_mass": comparison.mc_boundary_mass,
        "n_runs": comparison.n_runs,
        "n_absorbed": absorbed,
        "absorbed_fraction": absorbed / p["n_runs"],
        "fp_interior_mass": 1.0 - edge_mass(density,
                                            cells=p["boundary_cells"]),
        "t_final": p["t_final"],
        "fp_steps": n_fp,
        "fp_dt": fp_dt,
        "mc_steps": setup.max_steps,
        "fp_mass": density.mass,
        "fp_clamped": density.clamped,
    })
    if sgrid.dims == 1:
        job.svg("histogram.svg", hist_text, "histogram-vs-density")
    return "success"


_DRIVERS = {
    "exact": _run_exact,
    "wave": _run_wave,
    "collapse": _run_collapse,
    "fp": _run_fp,
    "sweep": _run_sweep,
    "compare": _run_compare,
}


# ------------------------------------------------------------- manifest

def _inventory(out: Path, files) -> tuple[dict, ...]:
    entries = []
    for path in sorted(set(files)):
        blob = path.read_bytes()
        entries.append({
            "path": path.relative_to(out).as_posix(),
            "bytes": len(blob),
            "sha256": hashlib.sha256(blob).hexdigest(),
        })
    return tuple(entries)


def _finish(
    config: ExperimentConfig,
    out: Path,
    job: _Job,
    status: str,
    error: str | None,
    partial: bool,
    total: float,
) -> RunManifest:
    manifest = RunManifest(
        config_hash=config.config_hash(),
        tool_version=lecollapse.__version__,
        mode=config.mode,
        seeds=config.seeds,
        status=status,
        partial=partial,
        error=error,
        wall_clock={"total": total, **job.clocks},
        outputs=_inventory(out, job.files),
    )
    write_json(out / "manifest.json", manifest.to_json())
    return manifest


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Dispatch a validated config and commit the results.

    Payload files are written as the run progresses; ``manifest.json``
    lands last. A module failure still writes the manifest, flagged
    partial with the error message, before the exception propagates.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    job = _Job(config, out)
    started = time.perf_counter()
    try:
        status = _DRIVERS[config.mode](job)
    except Exception as exc:
        _finish(
            config, out, job,
            status="error",
            error=f"{type(exc).__name__}: {exc}",
            partial=True,
            total=time.perf_counter() - started,
        )
        raise
    return _finish(
        config, out, job,
        status=status,
        error=None,
        partial=False,
        total=time.perf_counter() - started,
    )
