"""Diffusion limit of the probability random walk on the simplex.

In the limit of many small slips the ensemble density Phi(p, t) of channel
probabilities obeys a Fokker-Planck equation with no drift and state
dependent diffusion coefficients

    d/dt Phi = sum_jk  d^2/dp_j dp_k [ M_jk(p) Phi ],

where M is built from the same field overlap integrals the slip rates use.
Because M vanishes quadratically at the simplex boundary, the continuum
density never actually reaches it: boundary currents decay as the density
piles up nearby, so a diffusion description cannot produce definite
outcomes. The discrete walk, whose jumps are small but finite, crosses the
same boundary in finite time. The solvers here make that contrast
quantitative for two and three channels.

On the zero-sum constraint surface the increments of the walk have
covariance proportional to diag(p) - p p^T, which is positive
semidefinite. Combining the two channel overlaps of the mixed terms by
their mean reproduces exactly that form; combining them by their sum (the
face-value reading of the per-step covariance formula) breaks positive
semidefiniteness on part of the K = 3 simplex, so the diffusion matrix
defaults to the mean combination. ``diffusion_coefficients`` exposes both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lecollapse.engine import SlipParams, probability_vector
from lecollapse.wave import ScalarFieldSet, StabilityError, cell_averages

__all__ = [
    "ComparisonError",
    "FieldSummary",
    "field_summary",
    "diffusion_coefficients",
    "SimplexGrid",
    "FPDensity",
    "stable_step",
    "fp_step",
    "boundary_current",
    "edge_mass",
    "ensemble_histogram",
    "HistogramComparison",
    "compare_histogram",
]


class ComparisonError(ValueError):
    """Histogram and density are not comparable as given."""


@dataclass(frozen=True)
class FieldSummary:
    """Channel overlap integrals of a frozen field configuration.

    overlap[j] stands for the integral of n_a f_j f_0 over the box,
    evaluated as atoms-per-cell times the sum of cell means; it is the
    only field information the diffusion coefficients need.
    """

    overlap: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.overlap, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1 or (arr < 0).any():
            raise ValueError("overlap must be a nonnegative 1d vector")
        object.__setattr__(self, "overlap", arr)

    @property
    def channels(self) -> int:
        return self.overlap.size


def field_summary(fields: ScalarFieldSet, params: SlipParams) -> FieldSummary:
    """Reduce a field configuration to its overlap integrals."""
    f_cells = cell_averages(fields.f, fields.grid, params.lam)
    f0_cells = np.clip(cell_averages(fields.f0, fields.grid, params.lam),
                       0.0, 1.0)
    return FieldSummary(params.n_c * (f_cells * f0_cells[None, :]).sum(axis=1))


def diffusion_coefficients(
    p,
    summary: FieldSummary,
    params: SlipParams,
    pair_combination: str = "mean",
) -> np.ndarray:
    """Diffusion matrix M(p) of the simplex Fokker-Planck equation.

    M_jj = W p_j (1 - p_j) s_j / (tau N_c^2) and the mixed entries carry
    -W p_j p_k s_jk / (tau N_c^2) with s_jk the mean (default) or sum of
    the two channel overlaps. With the mean and equal overlaps s the
    matrix is exactly (W s / tau N_c^2)(diag(p) - p p^T), positive
    semidefinite on the whole simplex; the module docstring explains why
    the sum variant is offered but not used by the solver. Every entry
    vanishes quadratically as p approaches a vertex or an edge.
    """
    p = probability_vector(p)
    if summary.channels != p.size:
        raise ValueError("summary and p disagree on channel count")
    if pair_combination not in ("mean", "sum"):
        raise ValueError("pair_combination must be 'mean' or 'sum'")
    s = summary.overlap
    scale = params.w / (params.tau * params.n_c**2)
    pair = 0.5 * (s[:, None] + s[None, :])
    if pair_combination == "sum":
        pair = s[:, None] + s[None, :]
    m = -scale * np.outer(p, p) * pair
    np.fill_diagonal(m, scale * p * (1.0 - p) * s)
    return m


@dataclass(frozen=True)
class SimplexGrid:
    """Cell-centered grid on the independent simplex coordinates.

    Two channels leave one coordinate p_1 in [0, 1]; three channels leave
    (p_1, p_2) on the triangle p_1 + p_2 <= 1, discretized on the square
    with only the cells whose center satisfies the constraint marked
    valid. ``resolution`` counts cells per axis.
    """

    channels: int
    resolution: int

    def __post_init__(self):
        if self.channels not in (2, 3):
            raise ValueError("solver supports two or three channels")
        if self.resolution < 4:
            raise ValueError("need at least 4 cells per axis")

    @property
    def dims(self) -> int:
        return self.channels - 1

    @property
    def spacing(self) -> float:
        return 1.0 / self.resolution

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dims

    def centers(self, axis: int = 0) -> np.ndarray:
        return (np.arange(self.resolution) + 0.5) * self.spacing

    def valid(self) -> np.ndarray:
        """Mask of cells whose center lies inside the simplex."""
        if self.dims == 1:
            return np.ones(self.shape, dtype=bool)
        x = self.centers()
        return x[:, None] + x[None, :] < 1.0

    def full_point(self, indices) -> np.ndarray:
        """Channel probabilities at a cell center (last channel closed)."""
        coords = np.array([self.centers()[i] for i in indices])
        return np.concatenate([coords, [1.0 - coords.sum()]])


@dataclass
class FPDensity:
    """Density values on a simplex grid, normalized as a cell histogram.

    phi holds the probability mass per cell divided by the cell volume;
    invalid cells (outside the triangle) carry exactly 0. ``clamped``
    accumulates the (mass-neutral) positivity repairs of the mixed-term
    stencil, a solver diagnostic; it stays at rounding level in one
    dimension and small in two.
    """

    grid: SimplexGrid
    phi: np.ndarray
    time: float = 0.0
    clamped: float = 0.0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.shape != self.grid.shape:
            raise ValueError(f"phi must have shape {self.grid.shape}")
        if (self.phi < 0).any():
            raise ValueError("density must be nonnegative")
        if not self.grid.valid().all() and self.phi[~self.grid.valid()].any():
            raise ValueError("density must vanish outside the simplex")

    @property
    def mass(self) -> float:
        return float(self.phi.sum() * self.grid.spacing**self.grid.dims)

    def mean(self) -> np.ndarray:
        """First moment in the independent coordinates."""
        w = self.phi / self.phi.sum()
        x = self.grid.centers()
        if self.grid.dims == 1:
            return np.array([float((w * x).sum())])
        return np.array([
            float((w * x[:, None]).sum()),
            float((w * x[None, :]).sum()),
        ])

    @classmethod
    def near_delta(cls, grid: SimplexGrid, p0, width_cells: float = 2.0):
        """Narrow Gaussian bump around p0, normalized to unit mass."""
        p0 = probability_vector(p0)
        if p0.size != grid.channels:
            raise ValueError("p0 does not match the grid's channel count")
        sigma = width_cells * grid.spacing
        x = grid.centers()
        if grid.dims == 1:
            phi = np.exp(-0.5 * ((x - p0[0]) / sigma) ** 2)
        else:
            gx = np.exp(-0.5 * ((x - p0[0]) / sigma) ** 2)
            gy = np.exp(-0.5 * ((x - p0[1]) / sigma) ** 2)
            phi = gx[:, None] * gy[None, :]
            phi[~grid.valid()] = 0.0
        total = phi.sum() * grid.spacing**grid.dims
        if total <= 0:
            raise ValueError("initial bump misses the simplex interior")
        return cls(grid=grid, phi=phi / total)


def _reduced_coefficients(
    grid: SimplexGrid, summary: FieldSummary, params: SlipParams
):
    """Analytic diffusion coefficients on cell faces and centers.

    For two channels the equation reduces to d_t Phi = d11 [ a(p) Phi ]
    with a(p) = M_11(p). For three, eliminating p_3 gives the 2x2 matrix
    Q_ab = M_ab - M_a3 - M_b3 + M_33 over (p_1, p_2). Entries are
    evaluated exactly where the scheme needs them: second differences use
    cell centers, mixed differences use the corner-averaged values.
    """
    s = summary.overlap
    scale = params.w / (params.tau * params.n_c**2)

    if grid.dims == 1:

        def a11(x):
            return scale * s[0] * x * (1.0 - x)

        return (a11,)

    sbar = 0.5 * (s[:, None] + s[None, :])

    def q(a, b, x, y):
        # M entries at p = (x, y, 1 - x - y), mean pair combination
        p = np.stack([x, y, 1.0 - x - y])

        def m(i, j):
            if i == j:
                return scale * s[i] * p[i] * (1.0 - p[i])
            return -scale * sbar[i, j] * p[i] * p[j]

        return m(a, b) - m(a, 2) - m(b, 2) + m(2, 2)

    return (
        lambda x, y: q(0, 0, x, y),
        lambda x, y: q(1, 1, x, y),
        lambda x, y: q(0, 1, x, y),
    )


def _step_bound_1d(grid, a11) -> float:
    x = grid.centers()
    amax = float(np.max(a11(x)))
    if amax <= 0:
        return np.inf
    return grid.spacing**2 / (2.0 * amax)


def _step_bound_2d(grid, q11, q22, q12) -> float:
    x = grid.centers()
    xx, yy = np.meshgrid(x, x, indexing="ij")
    total = np.abs(q11(xx, yy)) + np.abs(q22(xx, yy)) + 2 * np.abs(q12(xx, yy))
    amax = float(total.max())
    if amax <= 0:
        return np.inf
    return grid.spacing**2 / (2.0 * amax)


def stable_step(
    grid: SimplexGrid, summary: FieldSummary, params: SlipParams
) -> float:
    """Largest dt fp_step accepts for this grid and coefficient set."""
    if summary.channels != grid.channels:
        raise ValueError("summary and grid disagree on channel count")
    coeffs = _reduced_coefficients(grid, summary, params)
    if grid.dims == 1:
        return _step_bound_1d(grid, *coeffs)
    return _step_bound_2d(grid, *coeffs)


def fp_step(
    density: FPDensity,
    summary: FieldSummary,
    params: SlipParams,
    dt: float,
) -> FPDensity:
    """One explicit step of the simplex Fokker-Planck equation.

    The update is in flux form: for each second-difference direction the
    face flux combines the gradient of (a Phi) built from face-centered
    coefficient values, so interior fluxes cancel in pairs and the total
    mass is conserved to rounding. Coefficients vanish on the simplex
    boundary, which together with zero-gradient closure makes the
    boundary faces carry exactly zero flux: mass can pile up near the
    boundary but never cross it. Rounding-level negative cells are
    clamped and the removed mass accumulated in ``clamped``.
    """
    grid = density.grid
    if summary.channels != grid.channels:
        raise ValueError("summary and grid disagree on channel count")
    if dt <= 0:
        raise ValueError("dt must be positive")
    coeffs = _reduced_coefficients(grid, summary, params)
    h = grid.spacing
    phi = density.phi

    if grid.dims == 1:
        (a11,) = coeffs
        bound = _step_bound_1d(grid, a11)
        if dt > bound * (1.0 + 1e-12):
            raise StabilityError(
                f"dt = {dt} exceeds the diffusion bound {bound}"
            )
        x = grid.centers()
        g = a11(x) * phi
        # interior faces between cells i and i+1; boundary faces at the
        # simplex edge carry no flux because a vanishes there
        flux = (g[1:] - g[:-1]) / h
        dphi = np.zeros_like(phi)
        dphi[:-1] += flux
        dphi[1:] -= flux
        new = phi + dt * dphi / h
    else:
        q11, q22, q12 = coeffs
        bound = _step_bound_2d(grid, q11, q22, q12)
        if dt > bound * (1.0 + 1e-12):
            raise StabilityError(
                f"dt = {dt} exceeds the diffusion bound {bound}"
            )
        x = grid.centers()
        xx, yy = np.meshgrid(x, x, indexing="ij")
        valid = grid.valid()
        g1 = q11(xx, yy) * phi
        g2 = q22(xx, yy) * phi
        g12 = q12(xx, yy) * phi
        g1[~valid] = 0.0
        g2[~valid] = 0.0
        g12[~valid] = 0.0
        dphi = np.zeros_like(phi)
        # second differences along each axis, flux form; faces touching a
        # cell outside the triangle carry no flux (the normal coefficient
        # vanishes on the hypotenuse), which keeps every boundary closed
        flux = (g1[1:, :] - g1[:-1, :]) / h
        flux *= valid[1:, :] & valid[:-1, :]
        dphi[:-1, :] += flux
        dphi[1:, :] -= flux
        flux = (g2[:, 1:] - g2[:, :-1]) / h
        flux *= valid[:, 1:] & valid[:, :-1]
        dphi[:, :-1] += flux
        dphi[:, 1:] -= flux
        # mixed term 2 d1 d2 (q12 Phi) via corner fluxes: each corner
        # value feeds the four surrounding cells with alternating signs,
        # so masking corners whose 2x2 block leaves the triangle keeps
        # the update conservative
        corner = 0.25 * (
            g12[1:, 1:] + g12[1:, :-1] + g12[:-1, 1:] + g12[:-1, :-1]
        )
        corner *= (
            valid[1:, 1:] & valid[1:, :-1] & valid[:-1, 1:] & valid[:-1, :-1]
        )
        mixed = np.zeros_like(phi)
        mixed[:-1, :-1] += corner
        mixed[1:, 1:] += corner
        mixed[:-1, 1:] -= corner
        mixed[1:, :-1] -= corner
        dphi += 2.0 * mixed / h
        new = phi + dt * dphi / h
        new[~valid] = 0.0

    clamped = density.clamped
    neg = new < 0.0
    if neg.any():
        # the mixed stencil can push sharply curved cells slightly
        # negative; clip and rescale so the repair stays mass neutral
        clamped += float(-new[neg].sum() * h**grid.dims)
        new = np.clip(new, 0.0, None)
        total = new.sum()
        if total > 0.0:
            new *= phi.sum() / total
    return FPDensity(
        grid=grid, phi=new, time=density.time + dt, clamped=clamped
    )


def boundary_current(
    density: FPDensity, summary: FieldSummary, params: SlipParams
) -> float:
    """Probability current through the simplex boundary, outward positive.

    Evaluates the flux form of the equation at the outermost faces: the
    current through a boundary face is the gradient of (a Phi) one cell
    in, scaled by the face coefficient, which vanishes on the boundary
    itself. The result decays in time as the density settles against the
    boundary, the signature that diffusion alone never absorbs.
    """
    grid = density.grid
    if summary.channels != grid.channels:
        raise ValueError("summary and grid disagree on channel count")
    coeffs = _reduced_coefficients(grid, summary, params)
    h = grid.spacing
    phi = density.phi
    x = grid.centers()
    if grid.dims == 1:
        (a11,) = coeffs
        g = a11(x) * phi
        # physical flux J = -d/dp [a Phi]; its outward component at each
        # edge, estimated at the innermost face (the boundary face itself
        # carries exactly zero in the scheme)
        left = (g[1] - g[0]) / h
        right = (g[-2] - g[-1]) / h
        return float(left + right)
    q11, q22, q12 = coeffs
    xx, yy = np.meshgrid(x, x, indexing="ij")
    g1 = q11(xx, yy) * phi
    g2 = q22(xx, yy) * phi
    valid = grid.valid()
    g1[~valid] = 0.0
    g2[~valid] = 0.0
    r = grid.resolution
    total = 0.0
    rows = valid[0, :] & valid[1, :]
    total += float(((g1[1, rows] - g1[0, rows]) / h).sum())
    cols = valid[:, 0] & valid[:, 1]
    total += float(((g2[cols, 1] - g2[cols, 0]) / h).sum())
    # hypotenuse faces: valid cells whose +x or +y neighbor leaves the
    # triangle; estimate the normal current one face further in
    for i, j in np.argwhere(valid):
        if (i + 1 == r or not valid[i + 1, j]) and i >= 1 and valid[i - 1, j]:
            total += (g1[i - 1, j] - g1[i, j]) / h
        if (j + 1 == r or not valid[i, j + 1]) and j >= 1 and valid[i, j - 1]:
            total += (g2[i, j - 1] - g2[i, j]) / h
    return float(total * h ** (grid.dims - 1))


def ensemble_histogram(results, grid: SimplexGrid) -> np.ndarray:
    """Histogram of final (or current) channel probabilities as a density.

    Each run contributes its first dims independent coordinates; the
    counts are normalized by run count and cell volume so the result is
    comparable to FPDensity.phi. Absorbed runs land in the outermost
    cells.
    """
    points = []
    for r in results:
        p = r if isinstance(r, np.ndarray) else np.asarray(r, dtype=float)
        points.append(p[: grid.dims])
    if not points:
        raise ComparisonError("no results to bin")
    pts = np.clip(np.asarray(points), 0.0, np.nextafter(1.0, 0.0))
    idx = np.minimum((pts / grid.spacing).astype(int), grid.resolution - 1)
    phi = np.zeros(grid.shape)
    np.add.at(phi, tuple(idx.T), 1.0)
    return phi / (len(points) * grid.spacing**grid.dims)


@dataclass(frozen=True)
class HistogramComparison:
    """Total-variation distance plus boundary-mass bookkeeping."""

    total_variation: float
    fp_boundary_mass: float
    mc_boundary_mass: float
    n_runs: int


def _edge_mask(grid: SimplexGrid, cells: int) -> np.ndarray:
    """Valid cells within ``cells`` layers of any simplex boundary."""
    if cells < 1:
        raise ValueError("cells must be at least 1")
    edge = np.zeros(grid.shape, dtype=bool)
    b = cells
    if grid.dims == 1:
        edge[:b] = True
        edge[-b:] = True
        return edge
    edge[:b, :] = True
    edge[:, :b] = True
    valid = grid.valid()
    # the hypotenuse p_3 = 0 runs diagonally; take cells whose diagonal
    # neighbour b steps away already falls outside the triangle
    for k in range(1, b + 1):
        hyp = valid & ~np.roll(valid, -k, axis=0)
        edge |= hyp
    edge &= valid
    return edge


def edge_mass(density: FPDensity, cells: int = 1) -> float:
    """Probability mass within ``cells`` layers of the simplex boundary.

    The complement, 1 - edge_mass, is the interior mass: the share of the
    ensemble the diffusion picture keeps away from absorption.
    """
    edge = _edge_mask(density.grid, cells)
    vol = density.grid.spacing**density.grid.dims
    return float(density.phi[edge].sum() * vol)


def compare_histogram(
    density: FPDensity, mc_probabilities, boundary_cells: int = 1
) -> HistogramComparison:
    """Compare the solved density with a Monte Carlo ensemble snapshot.

    mc_probabilities holds one probability vector per run (terminal values
    for absorbed runs). Requires at least 100 runs; both distributions
    are binned on the density's grid and compared by total variation
    (half the L1 distance of cell masses). Boundary mass counts the
    outermost ``boundary_cells`` layers, where the discrete walk piles up
    absorbed runs while the density merely leans against the edge.
    """
    mc = np.asarray(mc_probabilities, dtype=float)
    if mc.ndim != 2 or mc.shape[1] != density.grid.channels:
        raise ComparisonError(
            f"need (runs, {density.grid.channels}) probabilities"
        )
    if mc.shape[0] < 100:
        raise ComparisonError(
            f"need at least 100 runs for a stable histogram, got {mc.shape[0]}"
        )
    grid = density.grid
    hist = ensemble_histogram(list(mc), grid)
    vol = grid.spacing**grid.dims
    tv = 0.5 * float(np.abs(hist - density.phi).sum() * vol)
    edge = _edge_mask(grid, boundary_cells)
    return HistogramComparison(
        total_variation=tv,
        fp_boundary_mass=float(density.phi[edge].sum() * vol),
        mc_boundary_mass=float(hist[edge].sum() * vol),
        n_runs=int(mc.shape[0]),
    )
