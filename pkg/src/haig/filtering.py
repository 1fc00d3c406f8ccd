"""Runtime safety filters built from a solved game.

A filter wraps three ingredients: a fallback policy the system can always
drop into, a monitor scoring how dangerous a proposed action is at the
current state, and an intervention rule that picks the executed action.
``perfect_filter`` assembles the canonical instance from a converged
solution: the fallback is the maximin policy and the monitor is the
solved action value against the worst admissible human response.

Intervention rules:

* ``switch``: run the task action when its monitor score is strictly
  positive, otherwise run the fallback.  A score of exactly zero routes to
  the fallback, the cautious reading of the boundary.
* ``least_restrictive``: among actions with strictly positive score, run
  the one closest to the task action under ``action_metric`` (absolute
  index distance unless overridden), ties to the lowest index; if none
  qualify, run the fallback.
* ``fallback_only``: always run the fallback.

Monitors are plain callables ``(state, action) -> float`` so alternative
implementations plug in.  ``pluggable_monitor`` offers the solved-table
monitor ("critic") and a bounded rollout against the stored worst-case
human ("rollout"), which for deterministic games agrees in sign with the
critic once the horizon covers the solver's sweep count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NotConvergedError
from .model import _int_index
from .solver import ValueSolution

SWITCH = "switch"
LEAST_RESTRICTIVE = "least_restrictive"
FALLBACK_ONLY = "fallback_only"
INTERVENTION_MODES = (SWITCH, LEAST_RESTRICTIVE, FALLBACK_ONLY)


@dataclass(frozen=True)
class InterventionRecord:
    t: int
    state: int
    task_action: int
    monitor_value: float
    intervened: bool
    executed_action: int

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "z": self.state,
            "task_a": self.task_action,
            "monitor": self.monitor_value,
            "intervened": self.intervened,
            "executed_a": self.executed_action,
        }


@dataclass(frozen=True, eq=False)
class SafetyFilter:
    solution: ValueSolution
    fallback: np.ndarray
    monitor: Callable[[int, int], float]
    intervention: str
    action_metric: Callable[[int, int], float]


def _index_distance(a: int, b: int) -> float:
    return float(abs(a - b))


def perfect_filter(
    sol: ValueSolution,
    intervention: str = SWITCH,
    action_metric: Callable[[int, int], float] | None = None,
) -> SafetyFilter:
    """The filter whose monitor is exact: the solved worst-case action value."""
    if not sol.converged:
        raise NotConvergedError(
            f"perfect filter needs a converged solution (residual {sol.residual!r})"
        )
    if intervention not in INTERVENTION_MODES:
        raise ValueError(f"unknown intervention mode {intervention!r}")
    return SafetyFilter(
        solution=sol,
        fallback=sol.fallback_policy,
        monitor=pluggable_monitor(sol, "critic"),
        intervention=intervention,
        action_metric=action_metric or _index_distance,
    )


def filter_action(
    flt: SafetyFilter, z: int, a_task: int, *, t: int = 0
) -> tuple[int, InterventionRecord]:
    """Executed action and its record for one proposed task action.

    ``intervened`` is true exactly when the executed action differs from
    the proposal, so re-filtering an already-executed action is a no-op.
    """
    spec = flt.solution.spec
    z = _int_index(z, spec.num_states, "info state")
    a_task = _int_index(a_task, spec.num_ai_actions, "ai action")
    score = float(flt.monitor(z, a_task))

    if flt.intervention == SWITCH:
        executed = a_task if score > 0.0 else int(flt.fallback[z])
    elif flt.intervention == FALLBACK_ONLY:
        executed = int(flt.fallback[z])
    else:
        passing = [a for a in range(spec.num_ai_actions) if float(flt.monitor(z, a)) > 0.0]
        if passing:
            executed = min(passing, key=lambda a: (flt.action_metric(a, a_task), a))
        else:
            executed = int(flt.fallback[z])

    record = InterventionRecord(
        t=t,
        state=z,
        task_action=a_task,
        monitor_value=score,
        intervened=executed != a_task,
        executed_action=executed,
    )
    return executed, record


def check_initial_condition(flt: SafetyFilter, z0: int) -> bool:
    """Whether the fallback itself is certified at ``z0``.

    With the perfect filter this is exactly membership of ``z0`` in the
    solved safe set, and it is the premise of the safety guarantee: start
    here and the filtered system never reaches a failure state, whatever
    the task policy proposes, as long as the human stays in bound.
    """
    z0 = _int_index(z0, flt.solution.spec.num_states, "info state")
    return float(flt.monitor(z0, int(flt.fallback[z0]))) >= 0.0


def certified_actions(flt: SafetyFilter, z: int) -> tuple[int, ...]:
    """Actions whose monitor score is non-negative at ``z``."""
    spec = flt.solution.spec
    z = _int_index(z, spec.num_states, "info state")
    return tuple(a for a in range(spec.num_ai_actions) if float(flt.monitor(z, a)) >= 0.0)


def pluggable_monitor(
    sol: ValueSolution, mode: str = "critic", horizon: int | None = None
) -> Callable[[int, int], float]:
    """A monitor callable for ``sol``.

    ``critic`` reads the solved table: the value of the proposed action
    against the worst admissible response.  ``rollout`` simulates the
    proposed action followed by fallback play against the stored worst-case
    human for ``horizon`` steps and returns the smallest margin seen across
    all positive-probability observation branches.
    """
    spec = sol.spec
    worst = np.where(sol.spec.bound_mask[:, None, :], sol.q_values, np.inf).min(axis=2)

    if mode == "critic":
        def critic(z: int, a: int) -> float:
            z = _int_index(z, spec.num_states, "info state")
            a = _int_index(a, spec.num_ai_actions, "ai action")
            return float(worst[z, a])

        return critic

    if mode != "rollout":
        raise ValueError(f"unknown monitor mode {mode!r}")
    if horizon is None or horizon < 1:
        raise ValueError(f"rollout monitor needs horizon >= 1, got {horizon}")

    margins = sol.spec.margins
    trans = spec.transitions
    probs = spec.observation_probs
    adversary = sol.adversary_policy
    fallback = sol.fallback_policy

    def worst_branch_min(z: int, a: int, depth: int) -> float:
        b = int(adversary[z, a])
        lowest = np.inf
        for o in range(spec.num_observations):
            if probs[z, a, b, o] <= 0.0:
                continue
            nxt = int(trans[z, a, b, o])
            m = float(margins[nxt])
            if depth > 1:
                m = min(m, worst_branch_min(nxt, int(fallback[nxt]), depth - 1))
            lowest = min(lowest, m)
        return lowest

    def rollout(z: int, a: int) -> float:
        z = _int_index(z, spec.num_states, "info state")
        a = _int_index(a, spec.num_ai_actions, "ai action")
        return min(float(margins[z]), worst_branch_min(z, a, horizon))

    return rollout
