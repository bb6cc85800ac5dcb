"""Exact branch dynamics of local-entanglement contagion on a small lattice.

A gas of N bosonic atoms hops on a chain of M sites. Each atom carries a
local-entanglement (le) index: 0 while the atom is still untouched, k in
1..K once it has interacted, directly or through a chain of collisions, with
the k-th readout channel. A branch state assigns one complex amplitude to
every (configuration, le word) pair, where the word lists the N indices.

The branch generator acts like the standard Hamiltonian except that the two
interactions are dressed with integer contagion matrices. An atom sitting on
a channel-k track site either keeps a nonzero index (diagonal coupling) or is
raised from 0 to k; a same-site collision between an index-k atom and an
index-0 atom raises the latter to k. Nothing ever lowers an index, so the
generator is block triangular in the entanglement order and not self-adjoint,
while the branch sum over words still follows the standard unitary evolution
exactly. That sum identity is the main invariant this module maintains and
is what the tests pin down.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy import sparse

__all__ = [
    "DEFAULT_BASIS_CAP",
    "BasisSizeError",
    "DivergenceError",
    "UndefinedProbabilityError",
    "ContagionMatrices",
    "LatticeModel",
    "LatticeBasis",
    "BranchState",
    "BranchHamiltonian",
    "build_branch_hamiltonian",
    "standard_hamiltonian",
    "standard_projector",
    "default_timestep",
    "evolve",
    "reconstruct_standard",
    "le_occupation",
    "local_probabilities",
    "permutation_index_map",
    "symmetrize",
    "permutation_defect",
]

DEFAULT_BASIS_CAP = 1 << 20

# Fixed-step RK4 at dt = STEP_FACTOR / max-row-sum keeps the worst mode at
# dt*E <= STEP_FACTOR (Gershgorin), so the per-step phase error (dt*E)^5/120
# and norm decay (dt*E)^6/144 stay inside the 1e-6 / 1e-8-per-1e3-steps
# budgets with margin. 0.05 does not.
STEP_FACTOR = 0.025

NORM_DRIFT_LIMIT = 1e-6


class BasisSizeError(ValueError):
    """The requested model exceeds the branch-basis budget."""


class DivergenceError(RuntimeError):
    """Integrator watchdog: the reconstructed norm drifted too far."""


class UndefinedProbabilityError(ValueError):
    """Local probabilities requested for a cell with no expected occupancy."""


class ContagionMatrices:
    """Integer matrices acting on one atom's le index.

    Rows and columns are ordered by descending index, so for one channel the
    order is (1, 0): ``p0`` picks an index-0 atom and keeps it, ``p1`` picks
    an index-1 atom and keeps it, and ``s`` raises 0 to 1. They satisfy
    p0 + p1 = 1, s s = 0, p1 s = s and s p0 = s. For ``channels`` > 1 the
    raiser ``raiser(k)`` sends 0 to k and ``projector(r)`` picks index r.

    There is deliberately no adjoint of ``s`` anywhere in this class or this
    module: an index is never lowered, which is what makes the branch
    generator non-self-adjoint.
    """

    def __init__(self, channels: int = 1):
        if channels < 1:
            raise ValueError("channels must be >= 1")
        self.channels = int(channels)
        # letter held by row/column i, in descending order (K, ..., 1, 0)
        self.letters = np.arange(self.channels, -1, -1)
        self.p0 = self.projector(0)
        self.p1 = self.projector(1)
        self.s = self.raiser(1)

    def projector(self, r: int) -> np.ndarray:
        """Projector that picks le index ``r`` and keeps it unchanged."""
        if not 0 <= r <= self.channels:
            raise ValueError(f"index {r} outside 0..{self.channels}")
        return np.diag((self.letters == r).astype(np.int64))

    def raiser(self, k: int) -> np.ndarray:
        """Matrix sending le index 0 to ``k``; every other index goes to zero."""
        if not 1 <= k <= self.channels:
            raise ValueError(f"channel {k} outside 1..{self.channels}")
        n = self.channels + 1
        m = np.zeros((n, n), dtype=np.int64)
        row = int(np.nonzero(self.letters == k)[0][0])
        col = int(np.nonzero(self.letters == 0)[0][0])
        m[row, col] = 1
        return m

    def entangled(self) -> np.ndarray:
        """Projector onto any nonzero index (sum of per-channel projectors)."""
        return np.diag((self.letters >= 1).astype(np.int64))


@dataclass(frozen=True)
class LatticeModel:
    """Chain of ``sites`` sites, ``atoms`` bosonic atoms, ``channels`` tracks.

    ``a_tracks[k]`` lists the sites touched by channel (k+1)'s readout track.
    An atom on such a site feels ``u_strength`` and, if still unentangled,
    acquires index k+1. ``v_strength`` is the same-site contact interaction;
    a collision between an entangled atom and an unentangled one spreads the
    index. ``cross_channel_coupling`` selects what a same-site pair with two
    distinct nonzero indices feels: "diagonal" applies the plain potential
    and keeps both indices, which preserves the branch-sum identity for any
    number of channels; "none" drops the term entirely, the literal
    single-channel four-term rule, under which the identity only survives
    for channels = 1.
    """

    sites: int
    atoms: int
    channels: int
    hop_amplitude: float
    u_strength: float
    v_strength: float
    a_tracks: tuple[tuple[int, ...], ...]
    bosonic: bool = True
    cross_channel_coupling: str = "diagonal"

    def __post_init__(self):
        if self.sites < 1 or self.atoms < 1 or self.channels < 1:
            raise ValueError("sites, atoms and channels must all be >= 1")
        tracks = tuple(tuple(int(s) for s in t) for t in self.a_tracks)
        object.__setattr__(self, "a_tracks", tracks)
        if len(tracks) != self.channels:
            raise ValueError(
                f"need one track per channel: got {len(tracks)} tracks "
                f"for {self.channels} channels"
            )
        for t in tracks:
            for s in t:
                if not 0 <= s < self.sites:
                    raise ValueError(f"track site {s} outside 0..{self.sites - 1}")
        if self.cross_channel_coupling not in ("diagonal", "none"):
            raise ValueError("cross_channel_coupling must be 'diagonal' or 'none'")

    @property
    def n_configs(self) -> int:
        return self.sites**self.atoms

    @property
    def n_words(self) -> int:
        return (self.channels + 1) ** self.atoms

    @property
    def basis_size(self) -> int:
        return self.n_configs * self.n_words


def _digit_table(n_values: int, width: int) -> np.ndarray:
    """All base-``n_values`` digit strings of ``width`` digits, first digit slowest."""
    idx = np.arange(n_values**width)
    digits = np.empty((idx.size, width), dtype=np.int64)
    for pos in range(width - 1, -1, -1):
        digits[:, pos] = idx % n_values
        idx = idx // n_values
    return digits


class LatticeBasis:
    """Product basis of atom configurations times le words.

    A configuration lists the N atom sites, a word the N le indices; the
    flat index is config_index * n_words + word_index with the first atom's
    digit slowest in both factors.
    """

    def __init__(self, model: LatticeModel, cap: int = DEFAULT_BASIS_CAP):
        if model.basis_size > cap:
            raise BasisSizeError(
                f"basis size {model.basis_size} exceeds the cap {cap}"
            )
        self.model = model
        n = model.atoms
        self.config_digits = _digit_table(model.sites, n)
        self.word_digits = _digit_table(model.channels + 1, n)
        self.n_configs = self.config_digits.shape[0]
        self.n_words = self.word_digits.shape[0]
        self.n_basis = self.n_configs * self.n_words
        self.config_radix = (
            model.sites ** np.arange(n - 1, -1, -1)
        ).astype(np.int64)
        self.word_radix = (
            (model.channels + 1) ** np.arange(n - 1, -1, -1)
        ).astype(np.int64)

    def config_index(self, config) -> int:
        return int(np.dot(np.asarray(config, dtype=np.int64), self.config_radix))

    def word_index(self, word) -> int:
        return int(np.dot(np.asarray(word, dtype=np.int64), self.word_radix))

    def pack(self, config_idx: int, word_idx: int) -> int:
        return config_idx * self.n_words + word_idx


@dataclass
class BranchState:
    """One complex amplitude per (configuration, word) pair at a given time."""

    basis: LatticeBasis
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128)
        if amp.shape != (self.basis.n_basis,):
            raise ValueError(
                f"amplitudes must have shape ({self.basis.n_basis},)"
            )
        self.amplitudes = amp

    @classmethod
    def from_standard(
        cls, basis: LatticeBasis, psi0: np.ndarray | None = None
    ) -> "BranchState":
        """Place a standard wavefunction in the all-zeros word sector.

        ``psi0`` is a vector over configurations (defaults to the uniform,
        automatically permutation-symmetric state). It is normalized, and
        symmetrized first when the model is bosonic.
        """
        if psi0 is None:
            psi0 = np.full(basis.n_configs, 1.0, dtype=np.complex128)
        psi0 = np.asarray(psi0, dtype=np.complex128)
        if psi0.shape != (basis.n_configs,):
            raise ValueError(f"psi0 must have shape ({basis.n_configs},)")
        amp = np.zeros(basis.n_basis, dtype=np.complex128)
        zero_word = basis.word_index([0] * basis.model.atoms)
        amp[zero_word :: basis.n_words] = psi0
        state = cls(basis, amp)
        if basis.model.bosonic:
            state = symmetrize(state)
        nrm = np.linalg.norm(state.amplitudes)
        if nrm == 0.0:
            raise ValueError("initial state has zero norm")
        state.amplitudes /= nrm
        return state


@dataclass
class BranchHamiltonian:
    """Sparse branch generator with its cached non-self-adjointness."""

    basis: LatticeBasis
    matrix: sparse.csr_matrix
    hermitian_defect: float = field(default=0.0)

    @property
    def row_sum_norm(self) -> float:
        return float(np.abs(self.matrix).sum(axis=1).max())


def _track_count(model: LatticeModel, basis: LatticeBasis) -> np.ndarray:
    """(n_configs, atoms) table: how many tracks contain each atom's site."""
    count = np.zeros(model.sites, dtype=np.int64)
    for track in model.a_tracks:
        for s in set(track):
            count[s] += 1
    return count[basis.config_digits]


def _operator_norm(a: sparse.spmatrix) -> float:
    if a.nnz == 0:
        return 0.0
    if a.shape[0] <= 2048:
        return float(np.linalg.norm(a.toarray(), 2))
    val = sparse.linalg.svds(a.tocsc().astype(np.float64), k=1,
                             return_singular_vectors=False)
    return float(val[0])


def build_branch_hamiltonian(
    model: LatticeModel,
    basis: LatticeBasis | None = None,
    cap: int = DEFAULT_BASIS_CAP,
) -> BranchHamiltonian:
    """Assemble the branch generator over the (configuration, word) basis.

    The kinetic term hops atoms between neighbouring sites and is diagonal
    in the words. The track term adds, per channel k and per atom on a
    channel-k track site, a diagonal u_strength if the atom carries any
    nonzero index plus a word transition 0 -> k with amplitude u_strength.
    The contact term adds, per same-site atom pair, a diagonal v_strength
    when the pair is (0,0), (k,k), or, in "diagonal" mode, (k,k') with both
    nonzero, plus transitions (k,0) -> (k,k) and (0,k) -> (k,k) with
    amplitude v_strength. Word indices never decrease, so the matrix is
    block triangular in the entanglement order.

    Returns
    -------
    BranchHamiltonian
        Sparse real matrix plus the cached operator norm of (H - H^T).
    """
    if basis is None:
        basis = LatticeBasis(model, cap=cap)
    n_c, n_w, n = basis.n_configs, basis.n_words, basis.n_basis
    cd, wd = basis.config_digits, basis.word_digits
    rad_c, rad_w = basis.config_radix, basis.word_radix
    n_atoms = model.atoms
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    # kinetic: hop matrix over configurations, identity over words
    hop_r, hop_c = [], []
    for i in range(n_atoms):
        for step in (1, -1):
            ok = np.nonzero((cd[:, i] + step >= 0) & (cd[:, i] + step < model.sites))[0]
            hop_c.append(ok)
            hop_r.append(ok + step * rad_c[i])
    hop_r = np.concatenate(hop_r)
    hop_c = np.concatenate(hop_c)
    hop = sparse.coo_matrix(
        (np.full(hop_r.size, -model.hop_amplitude), (hop_r, hop_c)),
        shape=(n_c, n_c),
    )
    kinetic = sparse.kron(hop, sparse.identity(n_w, format="coo"), format="coo")
    rows.append(kinetic.row)
    cols.append(kinetic.col)
    vals.append(kinetic.data)

    # diagonal track coupling: u per (atom on a track site, nonzero index)
    t_count = _track_count(model, basis)
    entangled = (wd >= 1).astype(np.float64)
    diag = model.u_strength * (t_count.astype(np.float64) @ entangled.T)

    # track contagion: 0 -> k for atoms sitting on channel-k track sites
    for i in range(n_atoms):
        w0 = np.nonzero(wd[:, i] == 0)[0]
        if w0.size == 0:
            continue
        for k in range(1, model.channels + 1):
            track = np.zeros(model.sites, dtype=bool)
            track[list(model.a_tracks[k - 1])] = True
            cs = np.nonzero(track[cd[:, i]])[0]
            if cs.size == 0:
                continue
            w_dst = w0 + k * rad_w[i]
            rows.append((cs[:, None] * n_w + w_dst[None, :]).ravel())
            cols.append((cs[:, None] * n_w + w0[None, :]).ravel())
            vals.append(np.full(cs.size * w0.size, model.u_strength))

    # same-site contact: diagonal pieces and collision contagion
    for i in range(n_atoms):
        for j in range(i + 1, n_atoms):
            cpair = np.nonzero(cd[:, i] == cd[:, j])[0]
            if cpair.size == 0:
                continue
            wi, wj = wd[:, i], wd[:, j]
            if model.cross_channel_coupling == "diagonal":
                w_diag = ((wi == 0) & (wj == 0)) | ((wi >= 1) & (wj >= 1))
            else:
                w_diag = wi == wj
            diag[cpair[:, None], np.nonzero(w_diag)[0][None, :]] += model.v_strength
            for raised, donor in ((i, j), (j, i)):
                sel = np.nonzero((wd[:, raised] == 0) & (wd[:, donor] >= 1))[0]
                if sel.size == 0:
                    continue
                w_dst = sel + wd[sel, donor] * rad_w[raised]
                rows.append((cpair[:, None] * n_w + w_dst[None, :]).ravel())
                cols.append((cpair[:, None] * n_w + sel[None, :]).ravel())
                vals.append(np.full(cpair.size * sel.size, model.v_strength))

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag.ravel())

    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    defect = _operator_norm((matrix - matrix.T).tocoo())
    return BranchHamiltonian(basis=basis, matrix=matrix, hermitian_defect=defect)


def standard_hamiltonian(
    model: LatticeModel, basis: LatticeBasis | None = None
) -> sparse.csr_matrix:
    """Plain Hamiltonian over configurations: hopping + track u + contact v."""
    if basis is None:
        basis = LatticeBasis(model)
    cd, rad_c = basis.config_digits, basis.config_radix
    rows, cols, vals = [], [], []
    for i in range(model.atoms):
        for step in (1, -1):
            ok = np.nonzero((cd[:, i] + step >= 0) & (cd[:, i] + step < model.sites))[0]
            cols.append(ok)
            rows.append(ok + step * rad_c[i])
            vals.append(np.full(ok.size, -model.hop_amplitude))
    diag = model.u_strength * _track_count(model, basis).sum(axis=1).astype(np.float64)
    for i in range(model.atoms):
        for j in range(i + 1, model.atoms):
            diag += model.v_strength * (cd[:, i] == cd[:, j])
    rows.append(np.arange(basis.n_configs))
    cols.append(np.arange(basis.n_configs))
    vals.append(diag)
    return sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.n_configs, basis.n_configs),
    ).tocsr()


def standard_projector(basis: LatticeBasis) -> sparse.csr_matrix:
    """Word-sum map: branch vector -> standard wavefunction over configurations."""
    ones = sparse.coo_matrix(np.ones((1, basis.n_words)))
    return sparse.kron(sparse.identity(basis.n_configs), ones, format="csr")


def default_timestep(h: BranchHamiltonian) -> float:
    """Fixed RK4 step keeping every mode well inside the accuracy budget."""
    return STEP_FACTOR / h.row_sum_norm


def evolve(
    state: BranchState,
    h: BranchHamiltonian,
    dt: float | None = None,
    steps: int = 1,
) -> BranchState:
    """Advance a branch state by ``steps`` fixed RK4 steps of size ``dt``.

    The watchdog tracks the norm of the reconstructed standard state, which
    the exact dynamics conserves; a drift beyond 1e-6 raises
    DivergenceError naming the offending step.
    """
    if dt is None:
        dt = default_timestep(h)
    if dt <= 0 or steps < 0:
        raise ValueError("dt must be positive and steps nonnegative")
    mat = h.matrix
    proj = standard_projector(state.basis)
    psi = state.amplitudes.copy()
    ref = np.linalg.norm(proj @ psi)
    half = 0.5 * dt
    for n in range(steps):
        k1 = -1j * (mat @ psi)
        k2 = -1j * (mat @ (psi + half * k1))
        k3 = -1j * (mat @ (psi + half * k2))
        k4 = -1j * (mat @ (psi + dt * k3))
        psi = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = abs(np.linalg.norm(proj @ psi) - ref)
        if drift > NORM_DRIFT_LIMIT:
            raise DivergenceError(
                f"reconstructed norm drifted by {drift:.3e} at step {n + 1} "
                f"(dt={dt:.3e}); reduce the step"
            )
    return BranchState(state.basis, psi, state.time + steps * dt)


def reconstruct_standard(state: BranchState) -> np.ndarray:
    """Sum the branch amplitudes over words, one amplitude per configuration."""
    return standard_projector(state.basis) @ state.amplitudes


def le_occupation(state: BranchState, r: int) -> float:
    """Mean number of atoms carrying le index ``r``, branch weighted.

    Weights are the squared branch amplitudes normalized over the whole
    branch vector, so summing over r = 0..K returns the atom number exactly.
    """
    basis = state.basis
    if not 0 <= r <= basis.model.channels:
        raise ValueError(f"index {r} outside 0..{basis.model.channels}")
    counts = (basis.word_digits == r).sum(axis=1).astype(np.float64)
    w2 = np.abs(state.amplitudes) ** 2
    total = w2.sum()
    if total == 0.0:
        raise ValueError("state has zero norm")
    per_word = w2.reshape(basis.n_configs, basis.n_words).sum(axis=0)
    return float(per_word @ counts / total)


def local_probabilities(
    state: BranchState, cell
) -> tuple[np.ndarray, float]:
    """Fractions of atoms in ``cell`` carrying each le index, plus diagnostic.

    Parameters
    ----------
    state : BranchState
    cell : iterable of int
        Site indices forming the sampling cell.

    Returns
    -------
    fractions : ndarray, shape (channels + 1,)
        fractions[r] is the branch-diagonal expected number of index-r atoms
        in the cell divided by the standard expected atom number there.
    diagnostic : float
        Absolute deviation of sum(fractions) from 1. The numerators are
        branch diagonal while the denominator contains the interference
        cross terms between words, so this measures exactly the relative
        weight of those cross terms; it is reported, never thresholded.
    """
    basis = state.basis
    sites = np.asarray(sorted(set(int(s) for s in cell)), dtype=np.int64)
    if sites.size == 0:
        raise ValueError("cell must contain at least one site")
    if sites.min() < 0 or sites.max() >= basis.model.sites:
        raise ValueError("cell contains sites outside the lattice")
    mask = np.zeros(basis.model.sites, dtype=bool)
    mask[sites] = True
    in_cell = mask[basis.config_digits]

    psi_std = reconstruct_standard(state)
    cell_count = in_cell.sum(axis=1).astype(np.float64)
    denom = float((np.abs(psi_std) ** 2) @ cell_count)
    if denom <= 1e-12 * basis.model.atoms:
        raise UndefinedProbabilityError(
            "no expected occupancy in the requested cell"
        )
    w2 = (np.abs(state.amplitudes) ** 2).reshape(basis.n_configs, basis.n_words)
    in_cell_f = in_cell.astype(np.float64)
    fractions = np.empty(basis.model.channels + 1)
    for r in range(basis.model.channels + 1):
        letter = (basis.word_digits == r).astype(np.float64)
        count_cw = in_cell_f @ letter.T
        fractions[r] = float(np.einsum("cw,cw->", w2, count_cw)) / denom
    diagnostic = abs(float(fractions.sum()) - 1.0)
    return fractions, diagnostic


def permutation_index_map(basis: LatticeBasis, perm) -> np.ndarray:
    """Flat-index map of the simultaneous atom/word-letter permutation."""
    perm = list(perm)
    c_idx = basis.config_digits[:, perm] @ basis.config_radix
    w_idx = basis.word_digits[:, perm] @ basis.word_radix
    return (c_idx[:, None] * basis.n_words + w_idx[None, :]).ravel()


def symmetrize(state: BranchState) -> BranchState:
    """Average over simultaneous permutations of atom positions and letters."""
    n = state.basis.model.atoms
    acc = np.zeros_like(state.amplitudes)
    count = 0
    for perm in permutations(range(n)):
        acc += state.amplitudes[permutation_index_map(state.basis, perm)]
        count += 1
    return BranchState(state.basis, acc / count, state.time)


def permutation_defect(state: BranchState) -> float:
    """Largest amplitude change under any atom/letter transposition."""
    n = state.basis.model.atoms
    worst = 0.0
    for perm in permutations(range(n)):
        mapped = state.amplitudes[permutation_index_map(state.basis, perm)]
        worst = max(worst, float(np.abs(mapped - state.amplitudes).max()))
    return worst
