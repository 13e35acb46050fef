"""Independent certification of candidate equilibria.

This module re-derives everything it needs from the game data and the
reported piecewise values/strategies alone; it deliberately shares no
stage-game or enumeration code with the solver, so agreement between
the two is a genuine cross-check. It computes one-shot deviation gains
state by state (at the sub-interval granularity of the reported
selections), the exact evaluation of the reported strategy profile via
a linear solve, and reproducible Monte Carlo estimates of discounted
play.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .game import StochasticGameSpec

CHUNK_PATHS = 8192


@dataclass(frozen=True)
class SimulationReport:
    """Monte Carlo summary of discounted play under a stationary profile."""

    means: np.ndarray
    std_errors: np.ndarray
    paths: int
    seed: int
    horizon: int
    truncation_bound: float
    initial_state: int
    occupancy: np.ndarray
    rng: str = "philox"


@dataclass(frozen=True)
class Certificate:
    """Deviation gains per piece and player, their maximum, and the gap
    between reported values and the exact evaluation of the strategy."""

    epsilon: float
    gains: np.ndarray
    piece_labels: tuple
    recursion_residual: float
    simulation: SimulationReport | None = None


def _strategy_slices(spec):
    sizes = [len(a) for a in spec.actions]
    offsets = np.cumsum([0] + sizes)
    return [slice(offsets[i], offsets[i + 1]) for i in range(spec.players)]


def _reduce_against(tensor, player, strategies):
    """Contract a payoff tensor over every axis except ``player``'s."""
    axes = list(range(tensor.ndim))
    out = tensor
    for j in sorted((a for a in axes if a != player), reverse=True):
        out = np.tensordot(out, strategies[j], axes=([j], [0]))
    return out


def _pieces_of(result, spec):
    """Flat list of (cell, piece index, value, per-player strategy vectors)."""
    slices = _strategy_slices(spec)
    pieces = []
    for k in range(spec.n_states):
        v_parts = result.values.pieces[k]
        s_parts = result.strategies.pieces[k]
        if len(v_parts) != len(s_parts):
            raise InvalidInput(f"cell {k}: value and strategy pieces disagree")
        for p, (vp, sp) in enumerate(zip(v_parts, s_parts)):
            strat = [np.asarray(sp.value, dtype=float)[sl] for sl in slices]
            pieces.append((k, p, float(vp.fraction), np.asarray(vp.value, dtype=float), strat))
    return pieces


def deviation_residual(result, spec: StochasticGameSpec) -> Certificate:
    """One-shot deviation gains of the reported profile, plus the exact
    recursion gap.

    For every piece (sub-interval of a cell, or atom) and player, the
    gain is the best payoff over the player's feasible pure actions
    against the others' reported strategies, minus the reported value;
    the continuation integral uses the reported piecewise values. The
    recursion gap is the sup-norm distance between the reported values
    and the exact discounted evaluation of the reported strategies,
    obtained from a linear solve over pieces.
    """
    pieces = _pieces_of(result, spec)
    averages = np.asarray(result.values.averages(), dtype=float)
    density = spec.cell_density()
    masses = np.asarray(spec.space.masses, dtype=float)
    atoms = spec.space.atom_indices
    atom_values = averages[atoms] if len(atoms) else np.zeros((0, spec.players))
    # continuation of each player's reported value from every (state, profile)
    cont = np.einsum("k,ksx,ki->isx", masses, density, averages)
    if len(atoms):
        cont += np.einsum("asx,ai->isx", spec.atom_kernel, atom_values)
    beta = spec.discounts[:, None, None]
    one_shot = (1.0 - beta) * spec.payoffs + beta * cont

    shape = spec.profile_shape
    gains = np.zeros((len(pieces), spec.players))
    labels = []
    for idx, (k, p, _frac, value, strat) in enumerate(pieces):
        labels.append((k, p))
        for i in range(spec.players):
            tensor = one_shot[i, k].reshape(shape)
            vec = _reduce_against(tensor, i, strat)
            feas = spec.feasible[i][k]
            best = float(vec[feas].max())
            gains[idx, i] = best - value[i]
    epsilon = max(0.0, float(gains.max())) if gains.size else 0.0
    recursion = _recursion_gap(pieces, spec)
    return Certificate(
        epsilon=epsilon,
        gains=gains,
        piece_labels=tuple(labels),
        recursion_residual=recursion,
    )


def _recursion_gap(pieces, spec):
    """Exact discounted evaluation of the reported strategies over pieces."""
    n_pieces = len(pieces)
    trans_masses = spec.transition_masses()  # (target cell, state, profile)
    cell_piece_ids = [[] for _ in range(spec.n_states)]
    for idx, (k, _p, frac, _v, _s) in enumerate(pieces):
        cell_piece_ids[k].append((idx, frac))
    stage = np.zeros((spec.players, n_pieces))
    transition = np.zeros((n_pieces, n_pieces))
    for idx, (k, _p, _frac, _value, strat) in enumerate(pieces):
        prob = strat[0]
        for s in strat[1:]:
            prob = np.multiply.outer(prob, s)
        prob = prob.reshape(-1)
        total = prob.sum()
        if total <= 0:
            raise InvalidInput(f"piece {idx}: strategy carries no probability")
        prob = prob / total
        for i in range(spec.players):
            stage[i, idx] = float(np.dot(spec.payoffs[i, k], prob))
        to_cell = trans_masses[:, k, :] @ prob  # (n_cells,)
        for k2 in range(spec.n_states):
            if to_cell[k2] == 0.0:
                continue
            for jdx, frac2 in cell_piece_ids[k2]:
                transition[idx, jdx] += to_cell[k2] * frac2
    reported = np.array([value for (_k, _p, _f, value, _s) in pieces])  # (n_pieces, m)
    worst = 0.0
    eye = np.eye(n_pieces)
    for i in range(spec.players):
        beta = float(spec.discounts[i])
        exact = np.linalg.solve(eye - beta * transition, (1.0 - beta) * stage[i])
        worst = max(worst, float(np.max(np.abs(reported[:, i] - exact))))
    return worst


def simulate_payoffs(
    spec: StochasticGameSpec,
    result,
    s0: int,
    paths: int,
    seed: int,
    horizon: int | None = None,
    truncation: float | None = None,
) -> SimulationReport:
    """Monte Carlo discounted payoffs of the reported stationary profile.

    Trajectories start at cell ``s0`` (the sub-interval is drawn from the
    piece fractions), actions are drawn from the piece's strategies, and
    transitions from the game's per-cell masses. The horizon is either
    given or derived so the discarded tail is below ``truncation`` times
    the payoff bound scale. Paths are simulated in fixed-size blocks,
    each driven by a counter-based generator keyed on (seed, block), so
    identical seeds reproduce the report bit for bit regardless of the
    thread count (``SMPE_THREADS``).
    """
    if paths < 1:
        raise InvalidInput("need at least one path")
    if not (0 <= s0 < spec.n_states):
        raise InvalidInput(f"initial state {s0} out of range")
    beta_max = float(spec.discounts.max())
    bound = spec.payoff_bound
    if horizon is None:
        if truncation is None:
            raise InvalidInput("provide a horizon or a truncation error")
        if truncation <= 0:
            raise InvalidInput("truncation must be positive")
        if beta_max == 0.0 or truncation >= bound:
            horizon = 1
        else:
            horizon = max(1, math.ceil(math.log(truncation / bound) / math.log(beta_max)))
    elif truncation is not None and beta_max**horizon * bound > truncation * (1 + 1e-12):
        raise InvalidInput(
            f"horizon {horizon} leaves a tail above the requested truncation {truncation:g}"
        )
    truncation_bound = beta_max**horizon * bound

    pieces = _pieces_of(result, spec)
    max_pieces = max(len(result.values.pieces[k]) for k in range(spec.n_states))
    piece_cum = np.ones((spec.n_states, max_pieces))
    piece_base = np.zeros(spec.n_states, dtype=int)
    for idx, (k, p, frac, _v, _s) in enumerate(pieces):
        if p == 0:
            piece_base[k] = idx
    for k in range(spec.n_states):
        fracs = [float(pc.fraction) for pc in result.values.pieces[k]]
        cum = np.cumsum(fracs)
        cum[-1] = 1.0
        piece_cum[k, : len(fracs)] = cum

    n_pieces = len(pieces)
    sizes = [len(a) for a in spec.actions]
    strat_cum = []
    for i in range(spec.players):
        rows = np.empty((n_pieces, sizes[i]))
        for idx, (_k, _p, _f, _v, strat) in enumerate(pieces):
            vec = strat[i]
            total = vec.sum()
            rows[idx] = np.cumsum(vec / total)
        rows[:, -1] = 1.0
        strat_cum.append(rows)

    trans = spec.transition_masses()  # (target, state, profile)
    trans_rows = trans.transpose(1, 2, 0).reshape(-1, spec.n_states)  # (s*x, target)
    trans_cum = np.cumsum(trans_rows, axis=1)
    trans_cum /= trans_cum[:, -1:]
    strides = np.array(
        [int(np.prod(spec.profile_shape[i + 1 :])) for i in range(spec.players)], dtype=int
    )
    weights = np.array(
        [(1.0 - b) * b ** np.arange(horizon) for b in spec.discounts]
    )  # (m, horizon)
    payoff_flat = spec.payoffs.reshape(spec.players, -1)

    n_chunks = (paths + CHUNK_PATHS - 1) // CHUNK_PATHS

    def run_chunk(chunk_idx):
        n = min(CHUNK_PATHS, paths - chunk_idx * CHUNK_PATHS)
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed % 2**64, chunk_idx], dtype=np.uint64))
        )
        states = np.full(n, s0, dtype=int)
        acc = np.zeros((spec.players, n))
        visits = np.zeros(spec.n_states)
        for t in range(horizon):
            u_piece = rng.random(n)
            piece_idx = (u_piece[:, None] > piece_cum[states]).sum(axis=1)
            pid = piece_base[states] + piece_idx
            profile = np.zeros(n, dtype=int)
            for i in range(spec.players):
                u_act = rng.random(n)
                act = (u_act[:, None] > strat_cum[i][pid]).sum(axis=1)
                profile += act * strides[i]
            acc += weights[:, t, None] * payoff_flat[:, states * spec.n_profiles + profile]
            u_next = rng.random(n)
            states = (u_next[:, None] > trans_cum[states * spec.n_profiles + profile]).sum(axis=1)
            if t + 1 < horizon:
                visits += np.bincount(states, minlength=spec.n_states)
        return acc.sum(axis=1), (acc**2).sum(axis=1), visits, n

    threads = int(os.environ.get("SMPE_THREADS", "1") or 1)
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, range(n_chunks)))
    else:
        results = [run_chunk(c) for c in range(n_chunks)]

    total = np.zeros(spec.players)
    total_sq = np.zeros(spec.players)
    visits = np.zeros(spec.n_states)
    for part_sum, part_sq, part_visits, _n in results:
        total += part_sum
        total_sq += part_sq
        visits += part_visits
    means = total / paths
    if paths > 1:
        var = np.clip(total_sq / paths - means**2, 0.0, None) * paths / (paths - 1)
        std_errors = np.sqrt(var / paths)
    else:
        std_errors = np.zeros(spec.players)
    occupancy = visits / visits.sum() if visits.sum() > 0 else visits
    means.setflags(write=False)
    std_errors.setflags(write=False)
    occupancy.setflags(write=False)
    return SimulationReport(
        means=means,
        std_errors=std_errors,
        paths=paths,
        seed=seed,
        horizon=horizon,
        truncation_bound=float(truncation_bound),
        initial_state=int(s0),
        occupancy=occupancy,
    )
