"""Exact solver for the zero-sum safety game on finite information states.

The quantity computed here is the worst-case minimum margin the AI can
guarantee over an unbounded interaction, assuming the human stays inside
the per-state admissible action bound and gets to see the AI's committed
action before responding.  Starting from the margins themselves, each
sweep applies the backup

    value'(z) = max over a_ai of
                min over admissible a_h of
                min( margin(z),  E over o of value(next(z, a_ai, a_h, o)) )

with the expectation taken inside the inner min.  Sweeps read only the
previous iterate, so per-state updates are order-independent and the run
is reproducible bit for bit.  The iteration is monotone non-increasing
per state, which is asserted on every sweep.

For games with deterministic observations the fixed point is reached
exactly (values are mins and maxes over the original margins), and in at
most one sweep per state, so convergence is detected by strict equality.
With genuinely stochastic observations the iteration stops once the
max-norm residual drops to ``epsilon``; if the sweep budget runs out the
solution is returned with ``converged=False`` and the final residual.

``brute_force_value`` is an intentionally separate implementation, a
direct recursion over the game tree used as an oracle in tests.  It shares
no code with the sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError
from .model import GameSpec, _int_index

DEFAULT_EPSILON = 1e-9
DEFAULT_MAX_SWEEPS_STOCHASTIC = 100_000
_UNREACHED = np.iinfo(np.int64).max


@dataclass(frozen=True, eq=False)
class ValueSolution:
    """Converged (or best-effort) solution of one safety game.

    Attributes:
        values: per-state guaranteed worst-case minimum margin.
        q_values: (Z, A, B) table min(margin(z), E[value(next)]), defined for
            every human action including inadmissible ones.
        safe_set: states whose value is >= 0.
        fallback_policy: per-state maximin AI action.
        adversary_policy: (Z, A) worst-case human response to each AI action,
            restricted to the admissible bound.
        iterations: sweeps performed, counting the final no-change sweep.
        residual: max-norm change of the last sweep.
        sweeps: per-sweep value arrays when requested, else None.
    """

    spec: GameSpec
    values: np.ndarray
    q_values: np.ndarray
    safe_set: frozenset[int]
    fallback_policy: np.ndarray
    adversary_policy: np.ndarray
    iterations: int
    converged: bool
    epsilon: float
    residual: float
    sweeps: tuple[np.ndarray, ...] | None = None


def value_iteration(
    spec: GameSpec,
    *,
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int | None = None,
    record_sweeps: bool = False,
) -> ValueSolution:
    """Solve the game by synchronous sweeps of the safety backup.

    Args:
        spec: a structurally valid game.
        epsilon: residual threshold for stochastic-observation games.
        max_iters: sweep budget. Defaults to ``num_states + 1`` for
            deterministic games (enough by construction) and 100000 otherwise.
        record_sweeps: keep every intermediate value array on the solution.

    Ties in every argmax/argmin are broken toward the lowest action index.
    For deterministic games the stored adversary policy additionally
    prefers, among equally bad responses, the one that realizes the bad
    outcome soonest; see ``_attainment_steps``.
    """
    ell = spec.margins.astype(np.float64, copy=True)
    trans = spec.transitions
    probs = spec.observation_probs
    mask = spec.bound_mask[:, None, :]  # (Z, 1, B)
    deterministic = spec.is_deterministic()
    if max_iters is None:
        max_iters = spec.num_states + 1 if deterministic else DEFAULT_MAX_SWEEPS_STOCHASTIC

    values = ell.copy()
    history = [values.copy()] if record_sweeps else None
    iterations = 0
    converged = False
    residual = np.inf

    while iterations < max_iters:
        new_values = _sweep(ell, trans, probs, mask, values)
        if not np.all(new_values <= values):
            raise RuntimeError("value sweep increased a state value; backup is corrupt")
        residual = float(np.max(values - new_values))
        values = new_values
        iterations += 1
        if history is not None:
            history.append(values.copy())
        done = (residual == 0.0) if deterministic else (residual <= epsilon)
        if done:
            converged = True
            break

    q_values = _q_table(ell, trans, probs, values)
    inner = np.where(mask, q_values, np.inf).min(axis=2)
    fallback = inner.argmax(axis=1).astype(np.int64)
    adversary = _adversary_table(spec, ell, values, q_values, fallback, deterministic)
    safe = frozenset(int(z) for z in np.flatnonzero(values >= 0.0))

    values.setflags(write=False)
    q_values.setflags(write=False)
    fallback.setflags(write=False)
    adversary.setflags(write=False)
    return ValueSolution(
        spec=spec,
        values=values,
        q_values=q_values,
        safe_set=safe,
        fallback_policy=fallback,
        adversary_policy=adversary,
        iterations=iterations,
        converged=converged,
        epsilon=epsilon,
        residual=residual,
        sweeps=tuple(history) if history is not None else None,
    )


def _q_table(ell, trans, probs, values) -> np.ndarray:
    expected = (probs * values[trans]).sum(axis=3)
    return np.minimum(ell[:, None, None], expected)


def _sweep(ell, trans, probs, mask, values) -> np.ndarray:
    q = _q_table(ell, trans, probs, values)
    return np.where(mask, q, np.inf).min(axis=2).max(axis=1)


def _attainment_steps(spec: GameSpec, ell, values, q_values, fallback) -> np.ndarray:
    """Steps the adversary needs to turn each state's value into a real margin.

    Seeded at states whose margin already equals their value, then relaxed
    backwards along worst-case responses to the fallback policy.  Finite
    everywhere for converged deterministic games.
    """
    nz = spec.num_states
    det_obs = spec.observation_probs.argmax(axis=3)
    steps = np.where(ell == values, 0, _UNREACHED).astype(np.int64)
    succ_lists = []
    for z in range(nz):
        a = int(fallback[z])
        best = values[z]
        succ_lists.append(
            [
                int(spec.transitions[z, a, b, det_obs[z, a, b]])
                for b in spec.action_bound[z]
                if q_values[z, a, b] == best
            ]
        )
    for _ in range(nz):
        changed = False
        for z in range(nz):
            if steps[z] == 0 or not succ_lists[z]:
                continue
            best = min(steps[s] for s in succ_lists[z])
            if best != _UNREACHED and steps[z] > best + 1:
                steps[z] = best + 1
                changed = True
        if not changed:
            break
    return steps


def _adversary_table(spec, ell, values, q_values, fallback, deterministic) -> np.ndarray:
    nz, na = spec.num_states, spec.num_ai_actions
    adversary = np.zeros((nz, na), dtype=np.int64)
    if not deterministic:
        masked = np.where(spec.bound_mask[:, None, :], q_values, np.inf)
        return masked.argmin(axis=2).astype(np.int64)

    steps = _attainment_steps(spec, ell, values, q_values, fallback)
    det_obs = spec.observation_probs.argmax(axis=3)
    for z in range(nz):
        for a in range(na):
            best_key = None
            best_b = 0
            for b in spec.action_bound[z]:
                succ = int(spec.transitions[z, a, b, det_obs[z, a, b]])
                tail = 0 if ell[z] <= values[succ] else int(steps[succ])
                key = (q_values[z, a, b], tail, b)
                if best_key is None or key < best_key:
                    best_key = key
                    best_b = b
            adversary[z, a] = best_b
    return adversary


def q_value(sol: ValueSolution, z: int, a_ai: int, a_h: int) -> float:
    """One entry of the converged action-value table.

    Defined for every human action, admissible or not, so callers can ask
    what an out-of-bound action would cost.
    """
    spec = sol.spec
    z = _int_index(z, spec.num_states, "info state")
    a_ai = _int_index(a_ai, spec.num_ai_actions, "ai action")
    a_h = _int_index(a_h, spec.num_human_actions, "human action")
    return float(sol.q_values[z, a_ai, a_h])


def extract_policies(sol: ValueSolution) -> tuple[np.ndarray, np.ndarray]:
    """The maximin pair: (fallback AI policy, worst-case human response)."""
    return sol.fallback_policy, sol.adversary_policy


def brute_force_value(
    spec: GameSpec,
    z: int,
    horizon: int,
    *,
    node_budget: int = 10_000_000,
) -> float:
    """Depth-limited game value by direct recursion over the game tree.

    value(z, 0) is the margin at ``z``; deeper values apply the same
    max/min/min backup as the solver, one node at a time in plain Python.
    Results cache on (state, depth), which changes nothing arithmetically.
    Zero-probability observation branches are skipped.

    Raises BudgetExceededError once more than ``node_budget`` nodes have
    been evaluated.
    """
    z = _int_index(z, spec.num_states, "info state")
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")

    ell = [float(m) for m in spec.margins]
    trans = spec.transitions.tolist()
    probs = spec.observation_probs.tolist()
    bound = spec.action_bound
    n_ai = spec.num_ai_actions
    n_obs = spec.num_observations

    memo: dict[tuple[int, int], float] = {}
    nodes = 0

    def value(state: int, depth: int) -> float:
        nonlocal nodes
        key = (state, depth)
        hit = memo.get(key)
        if hit is not None:
            return hit
        nodes += 1
        if nodes > node_budget:
            raise BudgetExceededError(
                f"brute force exceeded its node budget of {node_budget}"
            )
        if depth == 0:
            result = ell[state]
        else:
            here = ell[state]
            best = None
            for a in range(n_ai):
                worst = None
                for b in bound[state]:
                    expected = 0.0
                    row = probs[state][a][b]
                    nxt = trans[state][a][b]
                    for o in range(n_obs):
                        p = row[o]
                        if p > 0.0:
                            expected += p * value(nxt[o], depth - 1)
                    outcome = here if here <= expected else expected
                    if worst is None or outcome < worst:
                        worst = outcome
                if best is None or worst > best:
                    best = worst
            result = best
        memo[key] = result
        return result

    return value(z, horizon)


def solution_payload(sol: ValueSolution) -> dict:
    """JSON-ready dict with the solved tables and run metadata."""
    return {
        "V": sol.values.tolist(),
        "Q": sol.q_values.tolist(),
        "safe_set": sorted(sol.safe_set),
        "pi_shield": sol.fallback_policy.tolist(),
        "pi_dagger": sol.adversary_policy.tolist(),
        "iterations": sol.iterations,
        "epsilon": sol.epsilon,
        "converged": sol.converged,
        "residual": sol.residual,
    }
