"""One-shot stage games and their mixed Nash equilibria.

Stage games are built per state by folding continuation moments and
atom values into the stage payoffs; equilibria are found by support
enumeration (linear indifference systems for two players, damped Newton
from a fixed start grid for three) with every candidate verified by an
independent best-response check. Games beyond the exact-mode envelope
fall back to regret matching toward a single approximate equilibrium.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NoConvergence
from .game import StochasticGameSpec

BR_TOL = 1e-10
DEDUPE_TOL = 1e-8
PERTURB_SCALE = 1e-12
EXACT_MAX_PLAYERS = 3
EXACT_MAX_ACTIONS = 4

# einsum programs to contract a payoff tensor against the other players'
# mixed strategies, leaving the focal player's axis free
_CONTRACT = {
    (1, 0): "a->a",
    (2, 0): "ab,b->a",
    (2, 1): "ab,a->b",
    (3, 0): "abc,b,c->a",
    (3, 1): "abc,a,c->b",
    (3, 2): "abc,a,b->c",
}


@dataclass(frozen=True)
class StageGame:
    """Finite normal-form game at one state.

    payoffs: per player, a tensor over the players' local feasible
        actions. actions: per player, the global action ids behind the
        local axes.
    """

    payoffs: tuple
    actions: tuple

    def __post_init__(self):
        payoffs = tuple(np.asarray(p, dtype=float) for p in self.payoffs)
        actions = tuple(tuple(int(a) for a in acts) for acts in self.actions)
        m = len(payoffs)
        shape = tuple(len(a) for a in actions)
        if m == 0 or len(actions) != m:
            raise InvalidInput("payoffs and actions must cover the same players")
        for p in payoffs:
            if p.shape != shape:
                raise InvalidInput(f"payoff tensors must have shape {shape}")
            if not np.all(np.isfinite(p)):
                raise InvalidInput("payoffs must be finite")
        for p in payoffs:
            p.setflags(write=False)
        object.__setattr__(self, "payoffs", payoffs)
        object.__setattr__(self, "actions", actions)

    @property
    def m(self) -> int:
        return len(self.payoffs)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.actions)


@dataclass(frozen=True)
class NashPoint:
    """Mixed strategy profile plus its expected payoff vector.

    ``eps`` is 0 for exactly verified equilibria and the certified
    best-response slack for approximate ones.
    """

    strategies: tuple
    payoffs: np.ndarray
    eps: float = 0.0

    def __post_init__(self):
        strategies = tuple(np.asarray(s, dtype=float) for s in self.strategies)
        payoffs = np.asarray(self.payoffs, dtype=float)
        for s in strategies:
            if np.any(s < -1e-12) or abs(s.sum() - 1.0) > 1e-12:
                raise InvalidInput("strategies must be probability vectors")
        for s in strategies:
            s.setflags(write=False)
        payoffs.setflags(write=False)
        object.__setattr__(self, "strategies", strategies)
        object.__setattr__(self, "payoffs", payoffs)


@dataclass(frozen=True)
class AggregateVector:
    """Continuation moments: per player, component and coarse cell,
    the mass-weighted integral of value times component density."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 3:
            raise InvalidInput("aggregates must be (players, components, coarse cells)")
        if not np.all(np.isfinite(c)):
            raise InvalidInput("aggregates must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)


def aggregate_moments(cell_values: np.ndarray, spec: StochasticGameSpec) -> AggregateVector:
    """Fold per-cell average values into continuation moments.

    ``cell_values`` is (n_cells, m): the fraction-weighted average value
    per fine cell (atoms included; their density rows are zero in
    well-posed games, so they contribute nothing).
    """
    values = np.asarray(cell_values, dtype=float)
    if values.shape != (spec.n_states, spec.players):
        raise InvalidInput(f"cell values must be {(spec.n_states, spec.players)}")
    masses = np.asarray(spec.space.masses, dtype=float)
    weighted = spec.kernel.rho * masses  # (J, n_cells)
    c = np.zeros((spec.players, spec.kernel.n_components, spec.space.n_coarse))
    np.add.at(c.transpose(2, 0, 1), spec.space.coarse, np.einsum("ki,jk->kij", values, weighted))
    return AggregateVector(c)


def stage_payoff_tensor(c: AggregateVector, v2: np.ndarray, spec: StochasticGameSpec) -> np.ndarray:
    """(m, n_states, n_profiles) one-shot payoffs for all states at once:
    discounted stage payoff plus discounted continuation via the
    aggregates and the atom channel."""
    if c.c.shape != (spec.players, spec.kernel.n_components, spec.space.n_coarse):
        raise InvalidInput("aggregate dimensions do not match the game")
    v2 = np.asarray(v2, dtype=float)
    if v2.shape != (spec.players, spec.n_atoms):
        raise InvalidInput(f"atom values must be {(spec.players, spec.n_atoms)}")
    cont = np.einsum("jesx,ije->isx", spec.kernel.q, c.c)
    if spec.n_atoms:
        cont = cont + np.einsum("asx,ia->isx", spec.atom_kernel, v2)
    beta = spec.discounts[:, None, None]
    return (1.0 - beta) * spec.payoffs + beta * cont


def build_stage_game(
    state: int,
    c: AggregateVector,
    v2: np.ndarray,
    spec: StochasticGameSpec,
    payoff_table: np.ndarray | None = None,
) -> StageGame:
    """Stage game at ``state`` under the given continuation data.

    ``payoff_table`` may pass a precomputed :func:`stage_payoff_tensor`
    to avoid rebuilding it per state.
    """
    if payoff_table is None:
        payoff_table = stage_payoff_tensor(c, v2, spec)
    actions = tuple(
        tuple(int(a) for a in np.flatnonzero(spec.feasible[i][state]))
        for i in range(spec.players)
    )
    if any(len(a) == 0 for a in actions):
        raise InvalidInput(f"state {state} has an empty feasible set")
    grids = np.ix_(*[list(a) for a in actions])
    payoffs = tuple(
        payoff_table[i, state].reshape(spec.profile_shape)[grids] for i in range(spec.players)
    )
    return StageGame(payoffs=payoffs, actions=actions)


def expected_payoffs(game: StageGame, strategies) -> np.ndarray:
    """Expected payoff per player under a mixed profile."""
    out = np.empty(game.m)
    for i in range(game.m):
        vec = payoff_against(game, i, strategies)
        out[i] = float(np.dot(strategies[i], vec))
    return out


def payoff_against(game: StageGame, player: int, strategies) -> np.ndarray:
    """Payoff of each of ``player``'s actions against the others' mixtures."""
    others = [np.asarray(strategies[j], dtype=float) for j in range(game.m) if j != player]
    return np.einsum(_CONTRACT[(game.m, player)], game.payoffs[player], *others)


def best_response_gap(game: StageGame, strategies) -> np.ndarray:
    """Per-player gain of the best pure deviation over the played profile."""
    gaps = np.empty(game.m)
    for i in range(game.m):
        vec = payoff_against(game, i, strategies)
        gaps[i] = float(vec.max() - np.dot(strategies[i], vec))
    return gaps


def is_degenerate(game: StageGame, tol: float = 1e-12) -> bool:
    """True when some player owns two payoff-equivalent actions.

    This is the degeneracy the pre-enumeration perturbation guards
    against; enumeration may then understate the equilibrium set, so
    callers flag such games in their diagnostics.
    """
    for i, tensor in enumerate(game.payoffs):
        rows = np.moveaxis(tensor, i, 0).reshape(game.shape[i], -1)
        for a in range(game.shape[i]):
            for b in range(a + 1, game.shape[i]):
                if np.max(np.abs(rows[a] - rows[b])) <= tol:
                    return True
    return False


def _perturbed(game: StageGame) -> StageGame:
    """Deterministic lexicographic tie-break: each payoff entry is nudged
    by a distinct multiple of a tiny unit."""
    scale = PERTURB_SCALE * max(1.0, max(float(np.max(np.abs(p))) for p in game.payoffs))
    n = int(np.prod(game.shape))
    payoffs = []
    for i, p in enumerate(game.payoffs):
        ramp = (np.arange(n, dtype=float) * game.m + i + 1.0) / (n * game.m + 1.0)
        payoffs.append(p + scale * ramp.reshape(game.shape))
    return StageGame(payoffs=tuple(payoffs), actions=game.actions)


def _projected(vec, support, size):
    full = np.zeros(size)
    full[list(support)] = vec
    return full


def _candidates_two(game: StageGame):
    a, b = game.payoffs
    k1, k2 = game.shape
    for r in range(1, min(k1, k2) + 1):
        for rows in itertools.combinations(range(k1), r):
            sub_a = a[list(rows)]
            sub_b = b[list(rows)]
            for cols in itertools.combinations(range(k2), r):
                block_a = sub_a[:, list(cols)]
                block_b = sub_b[:, list(cols)]
                # row mixture x equalizes the column player on its support,
                # column mixture y equalizes the row player
                lhs_y = np.zeros((r + 1, r + 1))
                lhs_y[:r, :r] = block_a
                lhs_y[:r, r] = -1.0
                lhs_y[r, :r] = 1.0
                lhs_x = np.zeros((r + 1, r + 1))
                lhs_x[:r, :r] = block_b.T
                lhs_x[:r, r] = -1.0
                lhs_x[r, :r] = 1.0
                rhs = np.zeros(r + 1)
                rhs[r] = 1.0
                try:
                    sol_y = np.linalg.solve(lhs_y, rhs)
                    sol_x = np.linalg.solve(lhs_x, rhs)
                except np.linalg.LinAlgError:
                    continue
                x, y = sol_x[:r], sol_y[:r]
                if x.min() < -1e-9 or y.min() < -1e-9:
                    continue
                x = np.clip(x, 0.0, None)
                y = np.clip(y, 0.0, None)
                if x.sum() <= 0 or y.sum() <= 0:
                    continue
                yield (_projected(x / x.sum(), rows, k1), _projected(y / y.sum(), cols, k2))


def _newton_starts(sizes, count=8):
    starts = [[np.full(s, 1.0 / s) for s in sizes]]
    for r in range(1, count):
        profile = []
        for i, s in enumerate(sizes):
            w = np.full(s, 0.3 / s)
            w[(r + i) % s] += 0.7
            profile.append(w / w.sum())
        starts.append(profile)
    return starts


def _candidates_three(game: StageGame):
    tensors = game.payoffs
    k = game.shape
    supports = [
        [c for r in range(1, k[i] + 1) for c in itertools.combinations(range(k[i]), r)]
        for i in range(3)
    ]
    for sup in itertools.product(*supports):
        sizes = [len(s) for s in sup]
        sub = [t[np.ix_(*[list(s) for s in sup])] for t in tensors]
        if sizes == [1, 1, 1]:
            yield tuple(_projected([1.0], sup[i], k[i]) for i in range(3))
            continue
        for start in _newton_starts(sizes):
            sol = _solve_indifference_three(sub, start)
            if sol is None:
                continue
            yield tuple(_projected(sol[i], sup[i], k[i]) for i in range(3))


def _solve_indifference_three(sub, start, max_iter=60, tol=1e-12):
    """Damped Newton on the square indifference-plus-simplex system."""
    sizes = [len(s) for s in start]
    off = np.cumsum([0] + sizes)
    n = off[3] + 3

    def unpack(z):
        return [z[off[i] : off[i + 1]] for i in range(3)], z[off[3] :]

    def residual(z):
        xs, v = unpack(z)
        res = np.empty(n)
        res[off[0] : off[1]] = np.einsum("abc,b,c->a", sub[0], xs[1], xs[2]) - v[0]
        res[off[1] : off[2]] = np.einsum("abc,a,c->b", sub[1], xs[0], xs[2]) - v[1]
        res[off[2] : off[3]] = np.einsum("abc,a,b->c", sub[2], xs[0], xs[1]) - v[2]
        res[off[3] :] = [x.sum() - 1.0 for x in xs]
        return res

    def jacobian(z):
        xs, _ = unpack(z)
        jac = np.zeros((n, n))
        jac[off[0] : off[1], off[1] : off[2]] = np.einsum("abc,c->ab", sub[0], xs[2])
        jac[off[0] : off[1], off[2] : off[3]] = np.einsum("abc,b->ac", sub[0], xs[1])
        jac[off[1] : off[2], off[0] : off[1]] = np.einsum("abc,c->ba", sub[1], xs[2])
        jac[off[1] : off[2], off[2] : off[3]] = np.einsum("abc,a->bc", sub[1], xs[0])
        jac[off[2] : off[3], off[0] : off[1]] = np.einsum("abc,b->ca", sub[2], xs[1])
        jac[off[2] : off[3], off[1] : off[2]] = np.einsum("abc,a->cb", sub[2], xs[0])
        for i in range(3):
            jac[off[i] : off[i + 1], off[3] + i] = -1.0
            jac[off[3] + i, off[i] : off[i + 1]] = 1.0
        return jac

    z = np.concatenate(start + [np.zeros(3)])
    xs, _ = unpack(z)
    z[off[3] :] = [
        float(np.einsum("abc,a,b,c->", sub[0], xs[0], xs[1], xs[2])),
        float(np.einsum("abc,a,b,c->", sub[1], xs[0], xs[1], xs[2])),
        float(np.einsum("abc,a,b,c->", sub[2], xs[0], xs[1], xs[2])),
    ]
    res = residual(z)
    for _ in range(max_iter):
        norm = np.max(np.abs(res))
        if norm <= tol:
            break
        try:
            step = np.linalg.solve(jacobian(z), -res)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jacobian(z), -res, rcond=None)
        t = 1.0
        for _ in range(20):
            trial = z + t * step
            trial_res = residual(trial)
            if np.max(np.abs(trial_res)) < norm:
                z, res = trial, trial_res
                break
            t /= 2.0
        else:
            return None
    if np.max(np.abs(res)) > 1e-10:
        return None
    xs, _ = unpack(z)
    out = []
    for x in xs:
        if x.min() < -1e-9:
            return None
        x = np.clip(x, 0.0, None)
        if x.sum() <= 0:
            return None
        out.append(x / x.sum())
    return out


def _verify_candidates(game: StageGame, candidates, br_tol, dedupe_tol):
    points = []
    for strategies in candidates:
        if max(best_response_gap(game, strategies)) > br_tol:
            continue
        flat = np.concatenate(strategies)
        if any(np.max(np.abs(flat - known)) <= dedupe_tol for known, _ in points):
            continue
        points.append((flat, strategies))
    out = [
        NashPoint(strategies=tuple(s), payoffs=expected_payoffs(game, s))
        for _, s in points
    ]
    out.sort(key=lambda p: (tuple(p.payoffs), tuple(np.concatenate(p.strategies))))
    return out


def nash_enumerate(
    game: StageGame,
    mode: str = "auto",
    br_tol: float = BR_TOL,
    dedupe_tol: float = DEDUPE_TOL,
    approx_eps: float = 1e-3,
    approx_iters: int = 200_000,
):
    """All verified mixed equilibria of a small finite game.

    Exact mode covers up to three players with at most four actions
    each: supports are enumerated on a lexicographically perturbed copy
    of the game and every solved candidate is re-verified against the
    unperturbed payoffs (best-response slack at most ``br_tol``), then
    deduplicated and sorted by payoff vector. Larger games run regret
    matching in approximate mode and return a single point carrying its
    certified slack.
    """
    if mode not in ("auto", "exact", "approx"):
        raise InvalidInput(f"unknown enumeration mode {mode!r}")
    if mode == "auto":
        exact_ok = game.m <= EXACT_MAX_PLAYERS and max(game.shape) <= EXACT_MAX_ACTIONS
        mode = "exact" if exact_ok else "approx"
    if mode == "approx":
        return [regret_matching(game, eps_target=approx_eps, max_iter=approx_iters)]
    if game.m > EXACT_MAX_PLAYERS:
        raise InvalidInput("exact enumeration supports at most three players")
    perturbed = _perturbed(game)
    if game.m == 1:
        vec = perturbed.payoffs[0]
        candidates = [
            (np.eye(game.shape[0])[a],) for a in np.argsort(-vec)
        ]
    elif game.m == 2:
        candidates = _candidates_two(perturbed)
    else:
        candidates = _candidates_three(perturbed)
    points = _verify_candidates(game, candidates, br_tol, dedupe_tol)
    if not points and game.m == 3:
        # degenerate perturbation may have displaced an isolated mixed
        # equilibrium; retry the support scan on the raw payoffs
        points = _verify_candidates(game, _candidates_three(game), br_tol, dedupe_tol)
    return points


def regret_matching(game: StageGame, eps_target: float = 1e-3, max_iter: int = 200_000):
    """Average regret-matching play until the best-response slack of the
    averaged profile falls below ``eps_target``."""
    sizes = game.shape
    regrets = [np.zeros(s) for s in sizes]
    sums = [np.zeros(s) for s in sizes]
    current = [np.full(s, 1.0 / s) for s in sizes]
    best = None
    check_every = 250
    for t in range(1, max_iter + 1):
        for i in range(game.m):
            vec = payoff_against(game, i, current)
            played = float(np.dot(current[i], vec))
            regrets[i] += vec - played
        for i in range(game.m):
            sums[i] += current[i]
            pos = np.clip(regrets[i], 0.0, None)
            total = pos.sum()
            current[i] = pos / total if total > 0 else np.full(sizes[i], 1.0 / sizes[i])
        if t % check_every == 0 or t == max_iter:
            avg = tuple(s / s.sum() for s in sums)
            eps = float(max(best_response_gap(game, avg)))
            if best is None or eps < best[0]:
                best = (eps, avg)
            if eps <= eps_target:
                return NashPoint(strategies=avg, payoffs=expected_payoffs(game, avg), eps=eps)
    eps, avg = best
    raise NoConvergence(
        f"regret matching reached eps {eps:g} > target {eps_target:g}",
        result=NashPoint(strategies=avg, payoffs=expected_payoffs(game, avg), eps=eps),
        epsilon=eps,
    )
