"""Stochastic slips in coherence and the collapse random walk.

Incoherent collisions between channel-entangled atoms and untouched atoms
transfer tiny amounts of probability between measurement channels. Each
slip moves the channel probabilities by a zero-sum delta of order
W f_j f_0 / (2 N_c); slips arrive as rare Poisson events per sampling cell,
channel and sign, with equal rates for the two signs so that means cancel
while second moments add. The resulting random walk is a martingale on the
simplex and, because the jumps are finite, it reaches the boundary in
finite time: one channel ends at probability 1 with frequency equal to its
initial probability, which is the Born rule.

The per-collision slip rate is not fixed by first principles beyond the
amplitude; ``rate_calibration`` scales it, and
``variance_matched_rate_scale`` returns the value that makes the process
variance agree with the quoted per-step moment formulas at a reference
point, which is what the diffusion-limit comparison uses.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2 as chi2_dist

from lecollapse.wave import Grid, KineticParams, ScalarFieldSet, cell_averages
from lecollapse.wave import laplacian as _laplacian
from lecollapse.wave import seed_field

__all__ = [
    "W_CEILING",
    "DegenerateStateError",
    "AggregationError",
    "SmallNumbersWarning",
    "philox_stream",
    "probability_vector",
    "SlipParams",
    "SlipEvent",
    "slip_delta",
    "sample_slips",
    "apply_slips",
    "theoretical_moments",
    "variance_matched_rate_scale",
    "CollapseSetup",
    "RunResult",
    "EnsembleResult",
    "run_collapse",
    "run_ensemble",
    "BornStatistics",
    "born_statistics",
    "estimate_collapse_time",
]

# largest incoherence strength in the random-matrix limit
W_CEILING = 4.0 / (3.0 * np.pi)


class DegenerateStateError(RuntimeError):
    """Every channel was absorbed in the same update."""


class AggregationError(ValueError):
    """Run results cannot be aggregated into one statistic."""


class SmallNumbersWarning(RuntimeWarning):
    """A Poisson mean left the rare-event regime (mu > 0.1)."""


def philox_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, stream).

    All randomness in the package flows from one 64-bit seed; independent
    streams (one per trajectory or per subsystem) are obtained by putting
    the stream index in the second Philox key word, so any subset of
    streams can be drawn in parallel and reproduced bit for bit.
    """
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def probability_vector(p) -> np.ndarray:
    """Validate and return a channel probability vector as float64."""
    arr = np.asarray(getattr(p, "p", p), dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("probabilities must form a nonempty 1d vector")
    if (arr < 0.0).any():
        raise ValueError("probabilities must be nonnegative")
    if abs(arr.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities must sum to 1, got {arr.sum()!r}")
    return arr


@dataclass(frozen=True)
class SlipParams:
    """Slip strength and coherent-cell geometry.

    w is the incoherence strength (bounded by 4/(3 pi) unless the ceiling
    is overridden), n_a the atom density, lam and tau the mean free path
    and time. n_c, the atoms per coherent cell, is derived as n_a lam^3;
    passing it explicitly only cross-checks that relation.
    rate_calibration scales the slip rate per cell (an order-of-magnitude
    knob, see the module docstring) and absorb_floor is the probability
    below which a channel is treated as reaching exactly zero: jumps are
    multiplicative near the boundary, so a literal zero is unreachable and
    the floor sets the resolution of the final jump. The Born bias this
    introduces is at most the floor itself.
    """

    w: float
    tau: float
    lam: float
    n_a: float
    n_c: float | None = None
    rate_calibration: float = 1.0
    absorb_floor: float = 1e-9
    w_ceiling: float = W_CEILING

    def __post_init__(self):
        if self.tau <= 0 or self.lam <= 0 or self.n_a <= 0:
            raise ValueError("tau, lam and n_a must be positive")
        if not 0.0 < self.w <= self.w_ceiling + 1e-12:
            raise ValueError(
                f"w = {self.w} outside (0, {self.w_ceiling}]; the ceiling "
                f"4/(3 pi) can be overridden via w_ceiling"
            )
        derived = self.n_a * self.lam**3
        if self.n_c is None:
            object.__setattr__(self, "n_c", derived)
        elif abs(self.n_c - derived) > 1e-9 * derived:
            raise ValueError(
                f"inconsistent n_c: got {self.n_c}, but N_c = n_a*lam^3 "
                f"= {derived}"
            )
        if self.n_c < 1.0:
            raise ValueError(f"n_c = {self.n_c} must be at least 1")
        if self.rate_calibration <= 0:
            raise ValueError("rate_calibration must be positive")
        if not 0.0 <= self.absorb_floor < 1.0:
            raise ValueError("absorb_floor must lie in [0, 1)")

    @property
    def cell_volume(self) -> float:
        return self.lam**3

    @property
    def collision_rate_per_cell(self) -> float:
        """Incoherent pair-collision rate per cell, n_a lam^3 / (2 tau)."""
        return self.n_a * self.cell_volume / (2.0 * self.tau)


@dataclass(frozen=True)
class SlipEvent:
    """One Poisson batch of identical slips in a cell."""

    cell: int
    channel: int
    sign: int
    count: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.count < 1:
            raise ValueError("count must be at least 1")


def slip_delta(p, j: int, f_j: float, f_0: float, params: SlipParams,
               sign: int) -> np.ndarray:
    """Probability transfer of a single slip on channel ``j``.

    delta_j = sign * W p_j (1 - p_j) f_j f_0 / (2 N_c) and every other
    channel loses sign * W p_j p_k f_j f_0 / (2 N_c); the components sum
    to exactly 0.0. The last nonzero component absorbs the float closure
    residual (a relative 1e-16 adjustment), which keeps the simplex walk
    exactly zero-sum; channels already at probability 0 stay untouched.
    """
    p = probability_vector(p)
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if not (0.0 <= f_j <= 1.0 and 0.0 <= f_0 <= 1.0):
        raise ValueError("fractions must lie in [0, 1]")
    if not 0 <= j < p.size:
        raise ValueError(f"channel {j} outside 0..{p.size - 1}")
    amp = sign * params.w * f_j * f_0 / (2.0 * params.n_c)
    delta = -amp * p[j] * p
    delta[j] = amp * p[j] * (1.0 - p[j])
    nz = np.flatnonzero(delta)
    if nz.size:
        # short-vector float sums run left to right, so closing on the
        # last nonzero entry cancels the prefix exactly
        last = nz[-1]
        delta[last] = -delta[:last].sum()
        for _ in range(8):
            resid = delta.sum()
            if resid == 0.0:
                break
            delta[last] -= resid
    return delta


def _cell_fractions(fields: ScalarFieldSet, params: SlipParams):
    """Block means of f_k and f_0 over lam-sized sampling cells."""
    f_cells, f0_cells = fields.cell_means(params.lam)
    return f_cells, np.clip(f0_cells, 0.0, 1.0)


def sample_slips(
    fields: ScalarFieldSet,
    p,
    params: SlipParams,
    dt: float,
    rng: np.random.Generator,
) -> list[SlipEvent]:
    """Draw the slip events of one time step.

    Each (cell, channel, sign) stream is an independent Poisson draw with
    mean collision_rate_per_cell * rate_calibration * dt * f_j f_0 * W/2,
    evaluated on the cell means of the fields; the two signs carry equal
    rates. Absorbed channels are excluded. Events are returned sorted by
    (cell, channel, sign). A mean above 0.1 triggers SmallNumbersWarning:
    the rare-event magnification argument needs mu well below 1.
    """
    p = probability_vector(p)
    if fields.channels != p.size:
        raise ValueError("fields and probabilities disagree on channel count")
    if not 0.0 < dt <= params.tau:
        raise ValueError(f"dt must lie in (0, tau], got {dt}")
    f_cells, f0_cells = _cell_fractions(fields, params)
    mu = (
        params.rate_calibration
        * params.collision_rate_per_cell
        * dt
        * (params.w / 2.0)
        * f_cells
        * f0_cells[None, :]
    )
    mu[p == 0.0, :] = 0.0
    if mu.size and mu.max() > 0.1:
        warnings.warn(
            f"Poisson mean {mu.max():.3g} exceeds 0.1; reduce dt to stay "
            f"in the rare-event regime",
            SmallNumbersWarning,
            stacklevel=2,
        )
    # (cell, channel, sign) layout so the event list sorts naturally
    draws = rng.poisson(np.stack([mu.T, mu.T], axis=-1))
    events = []
    for cell, ch, s in np.argwhere(draws):
        events.append(
            SlipEvent(
                cell=int(cell),
                channel=int(ch),
                sign=1 if s == 0 else -1,
                count=int(draws[cell, ch, s]),
            )
        )
    return events


def apply_slips(
    p, events, fields: ScalarFieldSet, params: SlipParams
) -> np.ndarray:
    """Accumulate count-weighted slip deltas into ``p``.

    All deltas are evaluated at the incoming ``p``. A channel driven to or
    below the absorption floor becomes exactly 0 and the survivors are
    renormalized; without an absorption the sum is already preserved to
    well below 1e-12 and no renormalization is applied. Channels at 0 stay
    at 0 exactly.
    """
    p = probability_vector(p)
    if not events:
        return p.copy()
    f_cells, f0_cells = _cell_fractions(fields, params)
    delta = np.zeros_like(p)
    for ev in events:
        delta += ev.count * slip_delta(
            p, ev.channel, f_cells[ev.channel, ev.cell], f0_cells[ev.cell],
            params, ev.sign,
        )
    q = p + delta
    q[p == 0.0] = 0.0
    hit = (q <= params.absorb_floor) & (p > 0.0)
    if hit.any():
        q[hit] = 0.0
        q = np.clip(q, 0.0, None)
        total = q.sum()
        if total <= 0.0:
            raise DegenerateStateError(
                "every channel was absorbed in one update"
            )
        q /= total
    return q


def theoretical_moments(
    p,
    fields: ScalarFieldSet,
    params: SlipParams,
    dt: float,
    pair_combination: str = "sum",
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step second moments of the slip-driven probability increments.

    Returns the variance vector
    var_j = W p_j (1 - p_j) (dt / tau) s_j / N_c^2
    and the covariance matrix with off-diagonal entries
    cov_jk = -W p_j p_k (dt / tau) s_jk / N_c^2,
    where s_j is the grid sum standing for the integral of n_a f_j f_0
    (atoms per cell times the sum of cell products) and s_jk combines the
    two channel integrals. ``pair_combination`` selects s_jk = s_j + s_k
    ("sum", the combination as displayed) or (s_j + s_k)/2 ("mean", the
    zero-sum-consistent variant; see fokker_planck for why the diffusion
    matrix uses it). The covariance diagonal carries the variances.
    """
    p = probability_vector(p)
    if pair_combination not in ("sum", "mean"):
        raise ValueError("pair_combination must be 'sum' or 'mean'")
    f_cells, f0_cells = _cell_fractions(fields, params)
    overlap = params.n_c * (f_cells * f0_cells[None, :]).sum(axis=1)
    scale = params.w * (dt / params.tau) / params.n_c**2
    var = scale * p * (1.0 - p) * overlap
    pair = overlap[:, None] + overlap[None, :]
    if pair_combination == "mean":
        pair = 0.5 * pair
    cov = -scale * np.outer(p, p) * pair
    np.fill_diagonal(cov, var)
    return var, cov


def variance_matched_rate_scale(
    params: SlipParams, channels: int, f_ref: float = 0.4, f0_ref: float = 0.6
) -> float:
    """rate_calibration that equates process and formula variances.

    The compound-Poisson walk has per-time variance proportional to
    (W f f0)^3 p^2 (...) while the quoted formula is linear in W f f0 and
    p(1 - p); the two agree at the uniform reference point p = 1/K with
    fields (f_ref, f0_ref) when the rate carries the factor returned here,
    8 K / (W^2 (f_ref f0_ref)^2).
    """
    if channels < 2:
        raise ValueError("need at least two channels")
    if not (0.0 < f_ref <= 1.0 and 0.0 < f0_ref <= 1.0):
        raise ValueError("reference fractions must lie in (0, 1]")
    return 8.0 * channels / (params.w**2 * (f_ref * f0_ref) ** 2)


@dataclass(frozen=True)
class CollapseSetup:
    """Everything one collapse trajectory needs except the seed.

    Channel fields start either from per-channel seed regions (fronts then
    grow and compete) or, with ``f_init``, from a uniform level on every
    channel. ``advance_fields`` selects the operator-split evolution
    (fields first, slips second); switching it off freezes the fields and
    the unentangled fraction at their initial values, which is the
    time-independent background the diffusion-limit comparison assumes.
    """

    kinetics: KineticParams
    slips: SlipParams
    grid: Grid
    p0: tuple[float, ...]
    dt: float
    max_steps: int
    seed_regions: tuple | None = None
    f_init: float | None = None
    advance_fields: bool = True
    record_every: int = 0

    def __post_init__(self):
        p0 = probability_vector(np.asarray(self.p0, dtype=np.float64))
        if p0.size < 2:
            raise ValueError("collapse needs at least two channels")
        object.__setattr__(self, "p0", tuple(float(x) for x in p0))
        if abs(self.kinetics.lam - self.slips.lam) > 1e-12 * self.kinetics.lam:
            raise ValueError("kinetics and slips disagree on lam")
        if abs(self.kinetics.tau - self.slips.tau) > 1e-12 * self.kinetics.tau:
            raise ValueError("kinetics and slips disagree on tau")
        self.grid.check_resolution(self.kinetics)
        if (self.seed_regions is None) == (self.f_init is None):
            raise ValueError("give either seed_regions or f_init, not both")
        if self.seed_regions is not None and len(self.seed_regions) != p0.size:
            raise ValueError("need one seed region per channel")
        if self.f_init is not None and not 0.0 <= self.f_init <= 1.0:
            raise ValueError("f_init must lie in [0, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not 0.0 < self.dt <= self.slips.tau:
            raise ValueError("dt must lie in (0, tau]")
        if self.advance_fields and self.dt > self.grid.monotone_limit(
            self.kinetics
        ) * (1.0 + 1e-12):
            raise ValueError(
                "dt exceeds the monotone field-step bound "
                f"{self.grid.monotone_limit(self.kinetics)}"
            )
        if self.record_every < 0:
            raise ValueError("record_every must be nonnegative")

    @property
    def channels(self) -> int:
        return len(self.p0)

    def initial_fields(self) -> np.ndarray:
        if self.f_init is not None:
            return np.full((self.channels,) + self.grid.shape, float(self.f_init))
        return np.stack(
            [seed_field(self.grid, region) for region in self.seed_regions]
        )


@dataclass
class RunResult:
    """Outcome of one collapse trajectory."""

    winner: int | None
    collapse_time: float | None
    slip_count: int
    seed: int
    p0: tuple[float, ...]
    status: str
    trajectory: np.ndarray | None = None


@dataclass
class EnsembleResult:
    """Batch of trajectories plus optional ensemble snapshots."""

    results: list[RunResult]
    checkpoint_steps: tuple[int, ...] = ()
    checkpoint_p: np.ndarray | None = None  # (len(steps), runs, channels)


def _evolve_batch(
    setup: CollapseSetup,
    seed: int,
    n_runs: int,
    checkpoint_steps: tuple[int, ...],
    record: bool,
) -> EnsembleResult:
    """Shared trajectory loop; active runs are compacted as they absorb.

    Dropping absorbed rows changes the shapes of later Poisson draws, so
    the stream of random numbers depends on (setup, seed, n_runs) as a
    whole; replays with the same triple are bit-identical.
    """
    rng = philox_stream(seed, 0)
    kin, slips, grid = setup.kinetics, setup.slips, setup.grid
    base = setup.initial_fields()
    p = np.tile(np.asarray(setup.p0), (n_runs, 1))
    gids = np.arange(n_runs)  # original run id of each active row
    p_store = p.copy()  # latest known p of every run, absorbed or not
    winner = np.full(n_runs, -1, dtype=np.int64)
    t_abs = np.full(n_runs, np.nan)
    slip_counts = np.zeros(n_runs, dtype=np.int64)
    spatial = tuple(range(2, 2 + grid.dims))
    rate = (
        slips.rate_calibration
        * slips.collision_rate_per_cell
        * setup.dt
        * (slips.w / 2.0)
    )
    if setup.advance_fields:
        f = np.broadcast_to(base[None], (n_runs,) + base.shape).copy()
    else:
        f = base[None]  # shared, never written
        f_cells_frozen = cell_averages(f, grid, slips.lam)
        f0_frozen = 1.0 - np.einsum("k,rk...->r...", np.asarray(setup.p0), f)
        f0_cells_frozen = np.clip(
            cell_averages(f0_frozen, grid, slips.lam), 0.0, 1.0
        )
    checkpoints = sorted(set(int(s) for s in checkpoint_steps))
    snaps = [] if checkpoints else None
    cp_iter = iter(checkpoints)
    next_cp = next(cp_iter, None)
    traj = [(0.0, p[0].copy())] if record else None
    warned = False

    step = 0
    while step < setup.max_steps and p.shape[0]:
        step += 1
        if setup.advance_fields:
            f0 = 1.0 - np.einsum("rk,rk...->r...", p, f)
            lap = _laplacian(f, grid.spacing, axes=spatial)
            growth = f * f0[:, None] / kin.tau
            new_f = np.clip(
                f + setup.dt * (kin.d_coeff * lap + growth), 0.0, 1.0
            )
            frozen = p == 0.0
            if frozen.any():
                keep = frozen.reshape(frozen.shape + (1,) * grid.dims)
                new_f = np.where(keep, f, new_f)
            f = new_f
            f_cells = cell_averages(f, grid, slips.lam)
            f0 = 1.0 - np.einsum("rk,rk...->r...", p, f)
            f0_cells = np.clip(cell_averages(f0, grid, slips.lam), 0.0, 1.0)
        else:
            f_cells = f_cells_frozen
            f0_cells = f0_cells_frozen
        mu = rate * f_cells * f0_cells[:, None, :]
        mu = np.where((p == 0.0)[:, :, None], 0.0, mu)
        if not warned and mu.size and mu.max() > 0.1:
            warnings.warn(
                f"Poisson mean {mu.max():.3g} at step {step}: slips are "
                f"aggregated per step, not individually resolved (the "
                f"update stays an exact martingale either way)",
                SmallNumbersWarning,
                stacklevel=3,
            )
            warned = True
        plus = rng.poisson(mu)
        minus = rng.poisson(mu)
        slip_counts[gids] += (plus + minus).sum(axis=(1, 2))
        amp = slips.w * f_cells * f0_cells[:, None, :] / (2.0 * slips.n_c)
        g = ((plus - minus) * amp).sum(axis=2)
        q = p + p * (g - (g * p).sum(axis=1, keepdims=True))
        q[p == 0.0] = 0.0
        hit = (q <= slips.absorb_floor) & (p > 0.0)
        rows = hit.any(axis=1)
        if rows.any():
            q[hit] = 0.0
            qr = np.clip(q[rows], 0.0, None)
            totals = qr.sum(axis=1)
            if (totals <= 0.0).any():
                raise DegenerateStateError(
                    f"every channel absorbed at step {step}"
                )
            q[rows] = qr / totals[:, None]
        p = q
        done = (p > 0.0).sum(axis=1) == 1
        if done.any():
            ids = gids[done]
            winner[ids] = np.argmax(p[done], axis=1)
            t_abs[ids] = step * setup.dt
            p_store[ids] = p[done]
        if record and setup.record_every and (
            step % setup.record_every == 0 or done[0]
        ):
            if traj and traj[-1][0] != step * setup.dt:
                traj.append((step * setup.dt, p[0].copy()))
        if next_cp is not None and step >= next_cp:
            p_store[gids] = p
            while next_cp is not None and step >= next_cp:
                snaps.append(p_store.copy())
                next_cp = next(cp_iter, None)
        if done.any():
            keep = ~done
            p = p[keep]
            gids = gids[keep]
            if setup.advance_fields:
                f = f[keep]
    if p.shape[0]:
        p_store[gids] = p
    while next_cp is not None:
        snaps.append(p_store.copy())
        next_cp = next(cp_iter, None)

    results = []
    for r in range(n_runs):
        rows = None
        if record and r == 0 and traj is not None:
            rows = np.array([np.concatenate(([t], pv)) for t, pv in traj])
        collapsed = winner[r] >= 0
        results.append(
            RunResult(
                winner=int(winner[r]) if collapsed else None,
                collapse_time=float(t_abs[r]) if collapsed else None,
                slip_count=int(slip_counts[r]),
                seed=seed,
                p0=setup.p0,
                status="collapsed" if collapsed else "timeout",
                trajectory=rows,
            )
        )
    return EnsembleResult(
        results=results,
        checkpoint_steps=tuple(checkpoints),
        checkpoint_p=np.array(snaps) if snaps is not None else None,
    )


def run_collapse(setup: CollapseSetup, seed: int) -> RunResult:
    """One trajectory: advance fields, sample slips, apply, repeat.

    Deterministic given (setup, seed). If the step budget runs out first
    the result carries status "timeout" and the partial trajectory.
    """
    record = setup.record_every > 0
    batch = _evolve_batch(setup, seed, 1, (), record)
    return batch.results[0]


def run_ensemble(
    setup: CollapseSetup,
    seed: int,
    n_runs: int,
    checkpoint_steps: tuple[int, ...] = (),
) -> EnsembleResult:
    """Vectorized batch of independent trajectories from one seed.

    The batch draws all runs' Poisson counts from a single Philox stream
    in a fixed order; ``checkpoint_steps`` requests ensemble snapshots of
    p after the given steps (absorbed runs hold their terminal value).
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    return _evolve_batch(setup, seed, n_runs, tuple(checkpoint_steps), False)


@dataclass(frozen=True)
class BornStatistics:
    """Winner frequencies with Wilson intervals and a chi-square test."""

    n_results: int
    n_resolved: int
    expected: tuple[float, ...]
    counts: tuple[int, ...]
    frequencies: tuple[float, ...]
    wilson_low: tuple[float, ...]
    wilson_high: tuple[float, ...]
    chi_square: float
    p_value: float


def born_statistics(results, p0=None) -> BornStatistics:
    """Aggregate winner frequencies over an ensemble of runs.

    Requires at least 100 results sharing one initial condition; runs that
    timed out are excluded from the frequencies but counted in n_results.
    Wilson intervals are at 95%; the chi-square statistic compares winner
    counts to the expected multinomial p0 * n_resolved.
    """
    results = list(results)
    if len(results) < 100:
        raise AggregationError(
            f"need at least 100 results, got {len(results)}"
        )
    first = results[0].p0
    for r in results:
        if r.p0 != first:
            raise AggregationError("results mix different initial conditions")
    if p0 is None:
        p0 = np.asarray(first)
    p0 = probability_vector(p0)
    if p0.size != len(first):
        raise AggregationError("p0 does not match the results' channel count")
    k = p0.size
    counts = np.zeros(k, dtype=np.int64)
    resolved = 0
    for r in results:
        if r.status == "collapsed":
            counts[r.winner] += 1
            resolved += 1
    if resolved == 0:
        raise AggregationError("no run collapsed; nothing to aggregate")
    freq = counts / resolved
    z = 1.959963984540054  # 95%
    denom = 1.0 + z**2 / resolved
    center = (freq + z**2 / (2 * resolved)) / denom
    half = (
        z * np.sqrt(freq * (1.0 - freq) / resolved + z**2 / (4.0 * resolved**2))
        / denom
    )
    expected_counts = p0 * resolved
    live = expected_counts > 0.0
    if (counts[~live] > 0).any():
        stat, pval = float("inf"), 0.0
    else:
        stat = float(
            (((counts[live] - expected_counts[live]) ** 2)
             / expected_counts[live]).sum()
        )
        dof = int(live.sum()) - 1
        if dof >= 1:
            pval = float(chi2_dist.sf(stat, dof))
        else:
            pval = 1.0 if stat == 0.0 else 0.0
    return BornStatistics(
        n_results=len(results),
        n_resolved=resolved,
        expected=tuple(float(x) for x in p0),
        counts=tuple(int(c) for c in counts),
        frequencies=tuple(float(x) for x in freq),
        wilson_low=tuple(float(x) for x in np.clip(center - half, 0.0, 1.0)),
        wilson_high=tuple(float(x) for x in np.clip(center + half, 0.0, 1.0)),
        chi_square=stat,
        p_value=pval,
    )


def estimate_collapse_time(
    params: SlipParams, l_system: float, electron_cloud: float | None = None
) -> float:
    """Closed-form collapse time scale tau n_a lam^5 / (L^2 W).

    ``electron_cloud`` (a size Delta) applies the refinement factor
    lam / Delta for detectors sensitive at the electron-cloud scale.
    """
    if l_system <= 0:
        raise ValueError("l_system must be positive")
    tau_c = params.tau * params.n_a * params.lam**5 / (l_system**2 * params.w)
    if electron_cloud is not None:
        if electron_cloud <= 0:
            raise ValueError("electron_cloud must be positive")
        tau_c *= params.lam / electron_cloud
    return tau_c
