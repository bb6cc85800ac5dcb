"""Coarse-grained le probability waves.

On scales large compared to the mean free path the fraction f of atoms
carrying a given le index obeys a reaction-diffusion equation: collisions
diffuse the index with D = lam^2 / (6 tau) and spread it at rate
f (1 - f) / tau, a Fisher-KPP equation whose pulled front travels at
2 sqrt(D / tau) = lam sqrt(2/3) / tau once the transient has died out.
The module integrates that equation (and its multi-channel coupled
variant) with an explicit scheme on a box grid, and measures front
position, width and speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StabilityError",
    "FrontUndefinedError",
    "SeedingError",
    "KineticParams",
    "Grid",
    "ScalarFieldSet",
    "seed_field",
    "laplacian",
    "kpp_step",
    "coupled_step",
    "cell_averages",
    "cell_counts",
    "front_position",
    "front_width",
    "FrontSpeedFit",
    "front_speed",
]


class StabilityError(RuntimeError):
    """A step size violates the explicit-scheme stability bound."""


class FrontUndefinedError(RuntimeError):
    """The requested level set does not cross the sampled profile."""


class SeedingError(ValueError):
    """A seed region misses the grid entirely."""


@dataclass(frozen=True)
class KineticParams:
    """Mean free path and mean free time of the carrier gas.

    Everything else follows: diffusion constant D = lam^2 / (6 tau), sound
    speed lam / (sqrt(3) tau) and the pulled front speed 2 sqrt(D / tau).
    """

    lam: float
    tau: float

    def __post_init__(self):
        if self.lam <= 0 or self.tau <= 0:
            raise ValueError("lam and tau must be positive")

    @property
    def d_coeff(self) -> float:
        return self.lam**2 / (6.0 * self.tau)

    @property
    def sound_speed(self) -> float:
        return self.lam / (np.sqrt(3.0) * self.tau)

    @property
    def kpp_speed(self) -> float:
        return 2.0 * np.sqrt(self.d_coeff / self.tau)


@dataclass(frozen=True)
class Grid:
    """Cell-centered box grid, one to three axes, uniform spacing."""

    extent: tuple[float, ...]
    spacing: float

    def __post_init__(self):
        ext = tuple(float(e) for e in (
            (self.extent,) if np.isscalar(self.extent) else self.extent
        ))
        object.__setattr__(self, "extent", ext)
        if not 1 <= len(ext) <= 3:
            raise ValueError("grid must have one, two or three axes")
        if self.spacing <= 0 or any(e <= 0 for e in ext):
            raise ValueError("extent and spacing must be positive")
        for e in ext:
            n = e / self.spacing
            if abs(n - round(n)) > 1e-9 or round(n) < 4:
                raise ValueError(
                    f"extent {e} must be an integral multiple (>= 4) of "
                    f"spacing {self.spacing}"
                )

    @property
    def dims(self) -> int:
        return len(self.extent)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round(e / self.spacing)) for e in self.extent)

    def axis_coords(self, axis: int = 0) -> np.ndarray:
        n = self.shape[axis]
        return (np.arange(n) + 0.5) * self.spacing

    def cfl_limit(self, params: KineticParams) -> float:
        """Largest stable explicit step for pure diffusion on this grid."""
        return self.spacing**2 / (2.0 * self.dims * params.d_coeff)

    def monotone_limit(self, params: KineticParams) -> float:
        """Step bound under which the reaction-diffusion update is monotone.

        Adds the reaction Lipschitz constant 1/tau to the diffusion CFL
        rate; below this bound the unclamped update maps [0, 1] into
        [0, 1] and preserves pointwise ordering of fields.
        """
        return 1.0 / (1.0 / self.cfl_limit(params) + 1.0 / params.tau)

    def check_resolution(self, params: KineticParams) -> None:
        """The spacing must resolve the mean free path (h <= lam / 4)."""
        if self.spacing > params.lam / 4.0 + 1e-12 * params.lam:
            raise ValueError(
                f"spacing {self.spacing} too coarse: need spacing <= lam/4 "
                f"= {params.lam / 4.0}"
            )


def seed_field(grid: Grid, region, inside: float = 1.0) -> np.ndarray:
    """Field that is ``inside`` within a region and 0 elsewhere.

    ``region`` is either a boolean mask over grid.shape or a box given as
    one (lo, hi) pair per axis in physical coordinates; a 1d grid also
    accepts a bare (lo, hi) pair. A region that covers no cell at all
    raises SeedingError.
    """
    if isinstance(region, np.ndarray) and region.dtype == bool:
        if region.shape != grid.shape:
            raise SeedingError(
                f"mask shape {region.shape} does not match grid {grid.shape}"
            )
        mask = region
    else:
        box = list(region)
        if grid.dims == 1 and len(box) == 2 and np.isscalar(box[0]):
            box = [tuple(box)]
        if len(box) != grid.dims:
            raise SeedingError(f"need one (lo, hi) pair per axis, got {box}")
        mask = np.ones(grid.shape, dtype=bool)
        for axis, (lo, hi) in enumerate(box):
            if hi <= lo:
                raise SeedingError(f"empty interval on axis {axis}: ({lo}, {hi})")
            x = grid.axis_coords(axis)
            sel = (x >= lo) & (x <= hi)
            shape = [1] * grid.dims
            shape[axis] = sel.size
            mask = mask & sel.reshape(shape)
    if not mask.any():
        raise SeedingError("seed region covers no grid cell")
    if not 0.0 <= inside <= 1.0:
        raise ValueError("seed level must lie in [0, 1]")
    out = np.zeros(grid.shape)
    out[mask] = inside
    return out


def laplacian(f: np.ndarray, spacing: float, axes=None) -> np.ndarray:
    """Second difference with zero-gradient walls (edge replication)."""
    if axes is None:
        axes = tuple(range(f.ndim))
    lap = np.zeros_like(f, dtype=np.float64)
    inv_h2 = 1.0 / spacing**2
    for ax in axes:
        pad = [(0, 0)] * f.ndim
        pad[ax] = (1, 1)
        g = np.pad(f, pad, mode="edge")
        lo = [slice(None)] * f.ndim
        hi = [slice(None)] * f.ndim
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        lap += (g[tuple(hi)] - 2.0 * f + g[tuple(lo)]) * inv_h2
    return lap


def _check_step(
    grid: Grid, params: KineticParams, dt: float, reaction: bool = True
) -> None:
    limit = grid.monotone_limit(params) if reaction else grid.cfl_limit(params)
    if dt > limit * (1.0 + 1e-12):
        raise StabilityError(
            f"dt = {dt} exceeds the step bound {limit} "
            f"(diffusion CFL {grid.cfl_limit(params)}"
            + (", tightened by the reaction rate 1/tau)" if reaction else ")")
        )
    if dt <= 0:
        raise ValueError("dt must be positive")


def kpp_step(
    f: np.ndarray,
    grid: Grid,
    params: KineticParams,
    dt: float,
    contagion: bool = True,
) -> np.ndarray:
    """One explicit step of the single-field probability wave.

    Walls are no-flux. With ``contagion`` false only diffusion acts, which
    conserves the field sum exactly. The result is clamped to [0, 1]; the
    scheme is monotone under the step bound so the clamp only removes
    rounding residue, and f = 0 and f = 1 are exact fixed points.
    """
    _check_step(grid, params, dt, reaction=contagion)
    f = np.asarray(f, dtype=np.float64)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    rate = params.d_coeff * laplacian(f, grid.spacing)
    if contagion:
        rate = rate + f * (1.0 - f) / params.tau
    return np.clip(f + dt * rate, 0.0, 1.0)


@dataclass
class ScalarFieldSet:
    """One field per channel plus the reference channel probabilities.

    f has shape (channels,) + grid.shape and every value lies in [0, 1];
    p_ref is the channel probability vector used to form the unentangled
    fraction f0 = 1 - sum_k p_k f_k.
    """

    grid: Grid
    f: np.ndarray
    p_ref: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        self.p_ref = np.asarray(self.p_ref, dtype=np.float64)
        if self.f.ndim != self.grid.dims + 1 or self.f.shape[1:] != self.grid.shape:
            raise ValueError(
                f"fields must have shape (channels,) + {self.grid.shape}"
            )
        if self.p_ref.shape != (self.f.shape[0],):
            raise ValueError("need one reference probability per channel")
        if (self.p_ref < 0).any() or abs(self.p_ref.sum() - 1.0) > 1e-9:
            raise ValueError("p_ref must be a probability vector")
        if (self.f < -1e-12).any() or (self.f > 1.0 + 1e-12).any():
            raise ValueError("field values must lie in [0, 1]")

    @property
    def channels(self) -> int:
        return self.f.shape[0]

    @property
    def f0(self) -> np.ndarray:
        return 1.0 - np.einsum("k,k...->...", self.p_ref, self.f)

    def cell_means(self, lam: float):
        """Block means of (f, f0) over lam-sized cells, memoized per lam.

        Valid only while f and p_ref are left unmodified; field evolution
        always builds a new ScalarFieldSet, so downstream per-event
        sampling may call this every step at no cost.
        """
        cache = self.__dict__.setdefault("_cell_means", {})
        got = cache.get(lam)
        if got is None:
            got = (
                cell_averages(self.f, self.grid, lam),
                cell_averages(self.f0, self.grid, lam),
            )
            cache[lam] = got
        return got


def coupled_step(
    fields: ScalarFieldSet, params: KineticParams, dt: float
) -> ScalarFieldSet:
    """Advance every live channel field by one explicit step.

    Each f_k diffuses and grows at f_k f0 / tau with the current common
    unentangled fraction f0 = 1 - sum p_k f_k, so channels compete for the
    same untouched atoms. Channels whose reference probability is exactly 0
    (absorbed) are frozen in place.
    """
    _check_step(fields.grid, params, dt)
    f0 = fields.f0
    spatial = tuple(range(1, fields.f.ndim))
    rate = params.d_coeff * laplacian(fields.f, fields.grid.spacing, axes=spatial)
    rate += fields.f * f0[None] / params.tau
    new_f = np.clip(fields.f + dt * rate, 0.0, 1.0)
    frozen = fields.p_ref == 0.0
    if frozen.any():
        new_f[frozen] = fields.f[frozen]
    return ScalarFieldSet(fields.grid, new_f, fields.p_ref)


def cell_counts(grid: Grid, lam: float) -> tuple[int, ...]:
    """Number of lam-sized sampling cells per axis; spacings must divide."""
    per = lam / grid.spacing
    if abs(per - round(per)) > 1e-9 or round(per) < 1:
        raise ValueError(
            f"cell size lam = {lam} must be an integral multiple of the "
            f"grid spacing {grid.spacing}"
        )
    counts = []
    for e in grid.extent:
        n = e / lam
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError(
                f"extent {e} must be an integral multiple of lam = {lam}"
            )
        counts.append(int(round(n)))
    return tuple(counts)


def cell_averages(values: np.ndarray, grid: Grid, lam: float) -> np.ndarray:
    """Block averages over lam-sized cells.

    ``values`` may carry leading batch axes; the trailing axes must match
    grid.shape. The result replaces those trailing axes with the flattened
    cell grid (row-major), matching the cell indices used by slip sampling.
    """
    counts = cell_counts(grid, lam)
    per = int(round(lam / grid.spacing))
    lead = values.shape[: values.ndim - grid.dims]
    if values.shape[values.ndim - grid.dims:] != grid.shape:
        raise ValueError("trailing axes must match the grid shape")
    shape = list(lead)
    for n in counts:
        shape.extend((n, per))
    blocked = values.reshape(shape)
    # average the fine axis paired with each cell axis, innermost first so
    # the earlier axis numbers stay valid
    mean = blocked
    for k in range(grid.dims - 1, -1, -1):
        mean = mean.mean(axis=len(lead) + 2 * k + 1)
    return mean.reshape(lead + (int(np.prod(counts)),))


def _line_profile(f: np.ndarray, grid: Grid, axis: int, through) -> np.ndarray:
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    if not 0 <= axis < grid.dims:
        raise ValueError(f"axis {axis} outside 0..{grid.dims - 1}")
    if grid.dims == 1:
        return f
    idx: list = []
    others = [a for a in range(grid.dims) if a != axis]
    if through is None:
        through = tuple(grid.shape[a] // 2 for a in others)
    for a in range(grid.dims):
        idx.append(slice(None) if a == axis else 0)
    for pos, a in zip(through, others):
        idx[a] = int(pos)
    return f[tuple(idx)]


def front_position(
    f: np.ndarray,
    grid: Grid,
    level: float = 0.5,
    axis: int = 0,
    through=None,
) -> float:
    """Outermost downward crossing of ``level`` along an axis.

    The profile is scanned from the far end toward the origin for the first
    pair of neighbours straddling the level, and the crossing is linearly
    interpolated. Saturated and empty profiles raise FrontUndefinedError.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly inside (0, 1)")
    prof = _line_profile(np.asarray(f, dtype=np.float64), grid, axis, through)
    x = grid.axis_coords(axis)
    if (prof >= level).all():
        raise FrontUndefinedError(f"profile saturated above level {level}")
    if (prof < level).all():
        raise FrontUndefinedError(f"profile everywhere below level {level}")
    for i in range(prof.size - 2, -1, -1):
        if prof[i] >= level > prof[i + 1]:
            frac = (prof[i] - level) / (prof[i] - prof[i + 1])
            return float(x[i] + frac * (x[i + 1] - x[i]))
    raise FrontUndefinedError(f"no downward crossing of level {level}")


def front_width(
    f: np.ndarray,
    grid: Grid,
    lo: float = 0.1,
    hi: float = 0.9,
    axis: int = 0,
    through=None,
) -> float:
    """Distance between the outer ``lo`` and ``hi`` level crossings."""
    if not 0.0 < lo < hi < 1.0:
        raise ValueError("need 0 < lo < hi < 1")
    x_lo = front_position(f, grid, lo, axis, through)
    x_hi = front_position(f, grid, hi, axis, through)
    return abs(x_lo - x_hi)


@dataclass(frozen=True)
class FrontSpeedFit:
    """Least-squares front speed plus the two analytic reference speeds."""

    speed: float
    residual: float
    kpp_speed: float
    transport_speed: float
    n_points: int
    t_span: float


def front_speed(
    times,
    positions,
    params: KineticParams,
    transient: float | None = None,
    min_span: float | None = None,
) -> FrontSpeedFit:
    """Fit position against time after discarding the early transient.

    ``transient`` defaults to 10 tau and ``min_span`` to 20 tau; a history
    whose usable part is shorter than ``min_span`` raises ValueError. The
    fit residual is the root-mean-square deviation from the line.
    """
    t = np.asarray(times, dtype=np.float64)
    x = np.asarray(positions, dtype=np.float64)
    if t.shape != x.shape or t.ndim != 1:
        raise ValueError("times and positions must be matching 1d arrays")
    if transient is None:
        transient = 10.0 * params.tau
    if min_span is None:
        min_span = 20.0 * params.tau
    keep = t >= t.min() + transient
    t, x = t[keep], x[keep]
    if t.size < 3 or t.max() - t.min() < min_span:
        raise ValueError(
            f"front history too short after the transient: need at least "
            f"{min_span} time units and 3 samples"
        )
    slope, intercept = np.polyfit(t, x, 1)
    resid = float(np.sqrt(np.mean((x - (slope * t + intercept)) ** 2)))
    return FrontSpeedFit(
        speed=float(slope),
        residual=resid,
        kpp_speed=params.kpp_speed,
        transport_speed=params.sound_speed,
        n_points=int(t.size),
        t_span=float(t.max() - t.min()),
    )
