"""Transition-kernel structure analysis and game-family generators.

The analysis side turns a game's decomposed transition density into a
dense matrix (target cells by source state/profile pairs), checks
whether rows are constant inside each coarse cell, and profiles the
numerical rank of each coarse row-block. A density that admits a J-term
decomposition is a sum of J outer products inside every coarse block,
so every block rank is at most J; rank growth under grid refinement is
the desk-scale signature of a kernel with no refinement-uniform finite
decomposition.

The generator side builds three families: an absorbing-state family
with triangular uniform jumps (rank-full blocks), a mixture family of
state-independent measures plus atoms (rank at most J), and a noisy
product-state family whose tilted reference measure makes the density
depend on the informative coordinate only (rank 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .game import KernelDecomposition, StochasticGameSpec
from .measure import GridSpace

RANK_THRESHOLD = 1e-8
ROW_MATCH_TOL = 1e-10


@dataclass(frozen=True)
class KernelMatrix:
    """Dense transition density: one row per divisible target cell.

    columns pairs each matrix column with its (source state, profile)
    label; ``rows`` holds the fine-cell index behind each matrix row.
    """

    matrix: np.ndarray
    space: GridSpace
    rows: np.ndarray
    columns: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        rows = np.asarray(self.rows, dtype=int)
        columns = np.asarray(self.columns, dtype=int)
        if matrix.ndim != 2 or matrix.shape != (len(rows), len(columns)):
            raise InvalidInput("matrix shape must match row and column labels")
        if not np.all(np.isfinite(matrix)) or np.any(matrix < -1e-12):
            raise InvalidInput("kernel matrix entries must be finite and nonnegative")
        if columns.ndim != 2 or columns.shape[1] != 2:
            raise InvalidInput("column labels must be (state, profile) pairs")
        for arr in (matrix, rows, columns):
            arr.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "columns", columns)

    def block_ids(self):
        """Coarse ids that own at least one matrix row, ascending."""
        return sorted(set(int(self.space.coarse[r]) for r in self.rows))


def kernel_matrix(spec: StochasticGameSpec, profiles=None) -> KernelMatrix:
    """Materialize the decomposed density of a game as a KernelMatrix.

    ``profiles`` optionally restricts the columns to a subset of flat
    profile indices (all profiles by default).
    """
    if profiles is None:
        profiles = list(range(spec.n_profiles))
    profiles = [int(p) for p in profiles]
    dens = spec.cell_density()  # (n_cells, n_states, n_profiles)
    rows = spec.space.divisible_indices
    sub = dens[np.ix_(rows, range(spec.n_states), profiles)]
    matrix = sub.reshape(len(rows), -1)
    columns = np.array(
        [(s, p) for s in range(spec.n_states) for p in profiles], dtype=int
    )
    return KernelMatrix(matrix=matrix, space=spec.space, rows=rows, columns=columns)


def check_coarser(kmtx: KernelMatrix, tol: float = ROW_MATCH_TOL) -> bool:
    """True when the density is measurable against the coarse partition.

    Requires identical rows inside every coarse cell (within ``tol``)
    and that every cell the matrix covers is divisible with positive
    mass confined to divisible cells, so no covered set can collapse
    the fine structure onto the coarse one. Atomic cells outside the
    matrix rows belong to the direct atom channel and do not count.
    """
    space = kmtx.space
    if not np.all(space.divisible[kmtx.rows]):
        return False
    coarse_of_rows = space.coarse[kmtx.rows]
    masses = np.asarray(space.masses, dtype=float)
    for e in set(int(c) for c in coarse_of_rows):
        members = space.coarse_members(e)
        if np.any(~space.divisible[members] & (masses[members] > 0)):
            return False  # a covered coarse cell hides an indivisible chunk
        block = kmtx.matrix[coarse_of_rows == e]
        if block.shape[0] > 1:
            spread = block.max(axis=0) - block.min(axis=0)
            if spread.max() > tol:
                return False
    return True


def _svd_rank(block: np.ndarray, threshold: float) -> int:
    if block.size == 0:
        return 0
    sv = np.linalg.svd(block, compute_uv=False)
    return int(np.sum(sv > threshold))


def _elimination_rank(block: np.ndarray, threshold: float) -> int:
    a = np.array(block, dtype=float)
    n_rows, n_cols = a.shape
    rank = 0
    row = 0
    for col in range(n_cols):
        if row >= n_rows:
            break
        pivot = row + int(np.argmax(np.abs(a[row:, col])))
        if abs(a[pivot, col]) <= threshold:
            continue
        a[[row, pivot]] = a[[pivot, row]]
        a[row] = a[row] / a[row, col]
        for i in range(n_rows):
            if i != row and a[i, col] != 0.0:
                a[i] -= a[i, col] * a[row]
        rank += 1
        row += 1
    return rank


def block_rank_profile(kmtx: KernelMatrix, threshold: float = RANK_THRESHOLD, method: str = "svd"):
    """Numerical rank of each coarse row-block, keyed by coarse id.

    Singular values (or elimination pivots) at or below ``threshold``
    count as zero. A density admitting a J-term decomposition has every
    block rank at most J.
    """
    if threshold <= 0:
        raise InvalidInput("rank threshold must be positive")
    if method not in ("svd", "elimination"):
        raise InvalidInput(f"unknown rank method {method!r}")
    ranker = _svd_rank if method == "svd" else _elimination_rank
    coarse_of_rows = kmtx.space.coarse[kmtx.rows]
    return {
        e: ranker(kmtx.matrix[coarse_of_rows == e], threshold)
        for e in kmtx.block_ids()
    }


# ---------------------------------------------------------------------------
# Family 1: absorbing state plus triangular uniform jumps.


@dataclass(frozen=True)
class LevyParams:
    """Absorbing-jump family: jump intensity, bystander count, grid size."""

    alpha: float
    m_theta: int
    n_cells: int

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise InvalidInput("alpha must lie in (0, 1]")
        if self.n_cells < 2:
            raise InvalidInput("need at least 2 grid cells")
        if self.m_theta < 0:
            raise InvalidInput("m_theta must be nonnegative")


def make_levy_kernel(
    params: LevyParams,
    blocks: int = 2,
    payoffs: np.ndarray | None = None,
    discounts=None,
    payoff_bound: float = 1.0,
) -> StochasticGameSpec:
    """Build the absorbing-jump game spec on a uniform grid of [0, 1).

    The unit interval is cut into ``n_cells`` divisible cells (reference
    weight = interval length) plus one atomic absorbing cell at 1. Two
    designated players choose in {-1, +1}; both choosing -1 jumps
    uniformly into [s, 1], both choosing +1 goes straight to the
    absorbing cell, and mixed choices split the difference. Remaining
    players (two with three actions, ``m_theta`` with two) do not affect
    the transition. Uniform-jump masses are integrated exactly against
    each cell, so the transition normalizes exactly.

    The divisible cells are grouped into ``blocks`` equal contiguous
    coarse cells and the density is decomposed against that partition
    with one component per within-block position. Stage payoffs default
    to zero (they are configuration inputs, not part of the family).
    """
    n = params.n_cells
    if blocks < 1 or n % blocks:
        raise InvalidInput("blocks must divide the cell count")
    block_size = n // blocks
    edges = np.linspace(0.0, 1.0, n + 1)
    mids = (edges[:-1] + edges[1:]) / 2
    length = 1.0 / n
    masses = np.concatenate([np.full(n, length), [length]])
    divisible = np.concatenate([np.ones(n, bool), [False]])
    coarse = np.concatenate([np.arange(n) // block_size, [blocks]])
    space = GridSpace(masses, divisible, coarse)

    m_players = 4 + params.m_theta
    actions = (
        ("L", "M", "R"),
        ("L", "M", "R"),
        ("-1", "1"),
        ("-1", "1"),
    ) + (("L", "R"),) * params.m_theta
    shape = tuple(len(a) for a in actions)
    n_profiles = int(np.prod(shape))
    n_states = n + 1

    # mixing factor of the uniform-jump part per (C, D) action pair
    factor_cd = np.array([[1.0, 0.5], [0.5, 0.0]])
    factor = np.zeros(n_profiles)
    for p in range(n_profiles):
        acts = np.unravel_index(p, shape)
        factor[p] = factor_cd[acts[2], acts[3]]

    sources = np.concatenate([mids, [1.0]])
    # exact overlap of [s, 1] with each cell, per source state
    overlap = np.clip(
        np.minimum(edges[1:][None, :], 1.0) - np.maximum(edges[:-1][None, :], sources[:, None]),
        0.0,
        None,
    )  # (n_states, n_cells)
    density = overlap / length  # wrt the length-weighted reference measure

    q = np.zeros((block_size, blocks + 1, n_states, n_profiles))
    for j in range(block_size):
        cells = np.arange(blocks) * block_size + j
        # (blocks, n_states) density at position-j cell of each block
        q[j, :blocks] = (
            params.alpha * density[:, cells].T[:, :, None] * factor[None, None, :]
        )
    rho = np.zeros((block_size, n_states))
    for j in range(block_size):
        rho[j, np.arange(blocks) * block_size + j] = 1.0

    jump_mass = params.alpha * (1.0 - sources)  # (n_states,)
    atom_kernel = (1.0 - jump_mass[:, None] * factor[None, :]).reshape(1, n_states, n_profiles)

    if payoffs is None:
        payoffs = np.zeros((m_players, n_states, n_profiles))
    if discounts is None:
        discounts = np.full(m_players, 0.5)
    feasible = tuple(np.ones((n_states, len(a)), dtype=bool) for a in actions)
    return StochasticGameSpec(
        discounts=discounts,
        actions=actions,
        feasible=feasible,
        payoffs=payoffs,
        payoff_bound=payoff_bound,
        space=space,
        kernel=KernelDecomposition(rho=rho, q=q),
        atom_kernel=atom_kernel,
    )


def levy_profile_index(spec: StochasticGameSpec, c_action: str, d_action: str) -> int:
    """Flat profile index with the two transition-relevant players set as given
    and every other player at their first action."""
    profile = [0] * spec.players
    profile[2] = spec.actions[2].index(c_action)
    profile[3] = spec.actions[3].index(d_action)
    return spec.profile_index(profile)


# ---------------------------------------------------------------------------
# Family 2: mixtures of state-independent measures plus atoms.


@dataclass(frozen=True)
class NowakParams:
    """Mixture family: atomless components, atomic components, mixing tables.

    mu: (J, n_div) masses of each atomless component over the divisible
        cells; rows must sum to 1.
    delta: (K, n_atoms) masses of each atomic component; rows sum to 1.
    qmix: (J, n_states, n_profiles) mixing weights of the atomless parts.
    bmix: (K, n_states, n_profiles) mixing weights of the atomic parts.
    The J + K mixing weights must lie in [0, 1] and sum to 1 per
    state/profile. States order the divisible cells first, then atoms.
    """

    mu: np.ndarray
    delta: np.ndarray
    qmix: np.ndarray
    bmix: np.ndarray

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        delta = np.asarray(self.delta, dtype=float)
        if delta.size == 0:
            delta = delta.reshape(0, 0)
        delta = np.atleast_2d(delta)
        qmix = np.asarray(self.qmix, dtype=float)
        bmix = np.asarray(self.bmix, dtype=float)
        if bmix.size == 0:
            bmix = bmix.reshape(0, *qmix.shape[1:])
        if mu.shape[0] < 1:
            raise InvalidInput("need at least one atomless component")
        if qmix.shape[0] != mu.shape[0] or bmix.shape[0] != delta.shape[0]:
            raise InvalidInput("mixing tables must match the component counts")
        if np.any(mu < 0) or np.any(delta < 0):
            raise InvalidInput("component masses must be nonnegative")
        if np.abs(mu.sum(axis=1) - 1.0).max() > 1e-9:
            raise InvalidInput("component masses inconsistent: mu rows must sum to 1")
        if delta.shape[0] and np.abs(delta.sum(axis=1) - 1.0).max() > 1e-9:
            raise InvalidInput("component masses inconsistent: delta rows must sum to 1")
        mix = np.concatenate([qmix, bmix], axis=0)
        if np.any(mix < -1e-12) or np.any(mix > 1 + 1e-12):
            raise InvalidInput("mixing weights must lie in [0, 1]")
        if np.abs(mix.sum(axis=0) - 1.0).max() > 1e-9:
            raise InvalidInput("mixing weights must sum to 1 per state and profile")
        for arr in (mu, delta, qmix, bmix):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "qmix", qmix)
        object.__setattr__(self, "bmix", bmix)

    @property
    def j_components(self) -> int:
        return self.mu.shape[0]

    @property
    def k_components(self) -> int:
        return self.delta.shape[0]


def make_nowak_game(
    params: NowakParams,
    actions,
    payoffs: np.ndarray,
    discounts,
    payoff_bound: float = 1.0,
) -> StochasticGameSpec:
    """Assemble the mixture-family game.

    The reference measure is the uniform mixture of all components; the
    atomless densities are the component masses divided by the cell
    weights, and the coarse partition collapses all divisible cells into
    a single coarse cell (the mixing weights carry no target-cell
    information), with each atom in its own coarse cell.
    """
    j, k = params.j_components, params.k_components
    n_div = params.mu.shape[1]
    n_atoms = params.delta.shape[1] if k else 0
    n_states = n_div + n_atoms
    if params.qmix.shape[1] != n_states:
        raise InvalidInput("mixing tables must cover every state")
    div_mass = params.mu.sum(axis=0) / (j + k)
    atom_mass = params.delta.sum(axis=0) / (j + k) if k else np.zeros(0)
    masses = np.concatenate([div_mass, atom_mass])
    divisible = np.concatenate([np.ones(n_div, bool), np.zeros(n_atoms, bool)])
    coarse = np.concatenate([np.zeros(n_div, int), 1 + np.arange(n_atoms)])
    space = GridSpace(masses, divisible, coarse)

    rho = np.zeros((j, n_states))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho[:, :n_div] = np.where(div_mass > 0, params.mu / div_mass, 0.0)
    q = np.zeros((j, space.n_coarse) + params.qmix.shape[1:])
    q[:, 0] = params.qmix
    atom_kernel = np.einsum("ksx,ka->asx", params.bmix, params.delta) if k else np.zeros(
        (0,) + params.qmix.shape[1:]
    )
    actions = tuple(tuple(a) for a in actions)
    feasible = tuple(np.ones((n_states, len(a)), dtype=bool) for a in actions)
    return StochasticGameSpec(
        discounts=discounts,
        actions=actions,
        feasible=feasible,
        payoffs=payoffs,
        payoff_bound=payoff_bound,
        space=space,
        kernel=KernelDecomposition(rho=rho, q=q),
        atom_kernel=atom_kernel,
    )


def random_nowak_game(
    seed: int,
    n_cells: int = 32,
    j_components: int = 2,
    k_atoms: int = 1,
    n_actions=(2, 2),
    beta_range=(0.2, 0.9),
):
    """Seeded random mixture-family instance; returns (params, spec)."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    m = len(n_actions)
    n_states = n_cells + k_atoms
    n_profiles = int(np.prod(n_actions))
    mu = rng.gamma(1.0, size=(j_components, n_cells)) + 1e-3
    mu /= mu.sum(axis=1, keepdims=True)
    delta = np.eye(k_atoms) if k_atoms else np.zeros((0, 0))
    mix = rng.gamma(1.0, size=(j_components + k_atoms, n_states, n_profiles)) + 1e-3
    mix /= mix.sum(axis=0, keepdims=True)
    params = NowakParams(
        mu=mu, delta=delta, qmix=mix[:j_components], bmix=mix[j_components:]
    )
    actions = tuple(tuple(f"a{i}" for i in range(k)) for k in n_actions)
    payoffs = rng.uniform(-1.0, 1.0, size=(m, n_states, n_profiles))
    discounts = rng.uniform(beta_range[0], beta_range[1], size=m)
    spec = make_nowak_game(params, actions, payoffs, discounts, payoff_bound=1.0)
    return params, spec


# ---------------------------------------------------------------------------
# Family 3: noisy product states.


@dataclass(frozen=True)
class NoisyGameParams:
    """Product-state family with a conditionally drawn noise coordinate.

    h_masses: weights of the informative coordinate's cells.
    r_masses: weights of the noise coordinate's (divisible) cells.
    alpha: (n_h, n_states, n_profiles) marginal transition density of
        the informative coordinate (integrates to 1 against h_masses).
    noise: (n_h, n_r) noise density given the informative coordinate
        (integrates to 1 against r_masses, row by row).
    """

    h_masses: np.ndarray
    r_masses: np.ndarray
    alpha: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        h_masses = np.asarray(self.h_masses, dtype=float)
        r_masses = np.asarray(self.r_masses, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        noise = np.asarray(self.noise, dtype=float)
        if np.any(h_masses < 0) or np.any(r_masses < 0):
            raise InvalidInput("coordinate masses must be nonnegative")
        if np.any(alpha < 0) or np.any(noise < 0):
            raise InvalidInput("densities must be nonnegative")
        n_h, n_r = len(h_masses), len(r_masses)
        if noise.shape != (n_h, n_r):
            raise InvalidInput("noise density must be (n_h, n_r)")
        if alpha.ndim != 3 or alpha.shape[0] != n_h:
            raise InvalidInput("alpha must be (n_h, n_states, n_profiles)")
        if np.abs(np.einsum("h,hsx->sx", h_masses, alpha) - 1.0).max() > 1e-9:
            raise InvalidInput("alpha must integrate to 1 against h_masses")
        if np.abs(noise @ r_masses - 1.0).max() > 1e-9:
            raise InvalidInput("noise must integrate to 1 against r_masses per row")
        for arr in (h_masses, r_masses, alpha, noise):
            arr.setflags(write=False)
        object.__setattr__(self, "h_masses", h_masses)
        object.__setattr__(self, "r_masses", r_masses)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "noise", noise)


def make_noisy_game(
    params: NoisyGameParams,
    actions,
    payoffs: np.ndarray,
    discounts,
    payoff_bound: float = 1.0,
) -> StochasticGameSpec:
    """Assemble the noisy product-state game.

    Product cells (h, r) carry the tilted reference weight
    ``h_mass * r_mass * noise`` so that the transition density with
    respect to it is the informative-coordinate marginal alone; the
    coarse partition groups cells by the informative coordinate, making
    the density coarse-measurable by construction.
    """
    n_h, n_r = len(params.h_masses), len(params.r_masses)
    n_states = n_h * n_r
    if params.alpha.shape[1] != n_states:
        raise InvalidInput("alpha must use the product cells as source states")
    masses = (params.h_masses[:, None] * params.r_masses[None, :] * params.noise).reshape(-1)
    if masses.sum() <= 0:
        raise InvalidInput("zero total reference mass")
    divisible = np.ones(n_states, dtype=bool)
    coarse = np.repeat(np.arange(n_h), n_r)
    space = GridSpace(masses, divisible, coarse)
    rho = np.ones((1, n_states))
    q = params.alpha[None, ...]
    actions = tuple(tuple(a) for a in actions)
    feasible = tuple(np.ones((n_states, len(a)), dtype=bool) for a in actions)
    atom_kernel = np.zeros((0, n_states, params.alpha.shape[2]))
    return StochasticGameSpec(
        discounts=discounts,
        actions=actions,
        feasible=feasible,
        payoffs=payoffs,
        payoff_bound=payoff_bound,
        space=space,
        kernel=KernelDecomposition(rho=rho, q=q),
        atom_kernel=atom_kernel,
    )


def random_noisy_game(
    seed: int,
    n_h: int = 4,
    n_r: int = 5,
    n_actions=(2, 2),
    beta_range=(0.2, 0.9),
    uniform_noise: bool = False,
):
    """Seeded random noisy-family instance; returns (params, spec)."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    m = len(n_actions)
    n_states = n_h * n_r
    n_profiles = int(np.prod(n_actions))
    h_masses = rng.gamma(1.0, size=n_h) + 1e-3
    h_masses /= h_masses.sum()
    r_masses = rng.gamma(1.0, size=n_r) + 1e-3
    r_masses /= r_masses.sum()
    if uniform_noise:
        noise = np.ones((n_h, n_r))
    else:
        noise = rng.gamma(1.0, size=(n_h, n_r)) + 1e-3
    noise /= (noise @ r_masses)[:, None]
    alpha = rng.gamma(1.0, size=(n_h, n_states, n_profiles)) + 1e-3
    alpha /= np.einsum("h,hsx->sx", h_masses, alpha)[None, :, :]
    params = NoisyGameParams(h_masses=h_masses, r_masses=r_masses, alpha=alpha, noise=noise)
    actions = tuple(tuple(f"a{i}" for i in range(k)) for k in n_actions)
    payoffs = rng.uniform(-1.0, 1.0, size=(m, n_states, n_profiles))
    discounts = rng.uniform(beta_range[0], beta_range[1], size=m)
    spec = make_noisy_game(params, actions, payoffs, discounts, payoff_bound=1.0)
    return params, spec
