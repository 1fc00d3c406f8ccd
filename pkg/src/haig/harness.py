"""Rollouts, exhaustive safety verification, and solver cross-checks.

Reproducibility contract: every random choice in a rollout comes from one
SplitMix64 stream seeded by the config, consumed in a fixed order per step
(task policy draw if randomized, then human policy draw if randomized,
then the observation draw, which happens even when the observation is
deterministic).  Identical configs therefore produce byte-identical JSONL
traces.

``verify_safety`` checks the filter's guarantee: from every initial
state the filter certifies, no reachable state within the given depth has
a negative margin, for any task-action choice at every step and any
admissible human response.  On deterministic games under the size limit
the check enumerates exhaustively (a breadth-first search over reachable
states; filtering makes the task action's effect a function of the state,
so state-level memoization loses nothing).  Larger or stochastic games
fall back to seeded random sequences.  Running it with the filter off is
the control arm; counterexample traces are reported verbatim.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, PolicyResolutionError
from .filtering import SWITCH, InterventionRecord, filter_action, perfect_filter
from .model import GameSpec, _int_index
from .rng import SplitMix64
from .solver import ValueSolution, brute_force_value, value_iteration
from .specfile import SpecDocument

FILTER_MODES = ("none", "switch", "least_restrictive", "fallback_only")


@dataclass(frozen=True)
class RolloutConfig:
    """One reproducible rollout.

    ``task_policy``: "random", "constant:<action>", or a named task policy
    from the document.
    ``human_policy``: "worst_case", "uniform", "off_odd",
    "scripted:<a1,a2,...>", or a named human policy.  All but "off_odd"
    must stay inside the admissible bound; "off_odd" plays the
    lowest-index action outside the bound wherever one exists and flags
    those steps.
    ``initial_state``: index or state label.
    """

    document: SpecDocument
    task_policy: str = "random"
    human_policy: str = "worst_case"
    filter_mode: str = SWITCH
    initial_state: int | str = 0
    max_steps: int = 20
    seed: int = 0


@dataclass(frozen=True)
class RolloutStep:
    t: int
    state: int
    task_action: int
    monitor_value: float
    intervened: bool
    executed_action: int
    human_action: int
    observation: int
    margin_value: float
    odd_violation: bool
    gt_failure: bool | None

    def to_json_dict(self) -> dict:
        record = InterventionRecord(
            t=self.t,
            state=self.state,
            task_action=self.task_action,
            monitor_value=self.monitor_value,
            intervened=self.intervened,
            executed_action=self.executed_action,
        ).to_json_dict()
        record["a_human"] = self.human_action
        record["obs"] = self.observation
        record["margin"] = self.margin_value
        if self.odd_violation:
            record["odd_violation"] = True
        if self.gt_failure is not None:
            record["gt_failure"] = self.gt_failure
        return record


@dataclass(frozen=True, eq=False)
class RolloutTrace:
    """Steps plus summary metrics.

    ``min_margin`` and ``violation_count`` range over every visited state,
    the terminal one included.  ``gt_failure_count`` does the same against
    the privileged failure set when ground truth is present.
    """

    spec: GameSpec
    steps: tuple[RolloutStep, ...]
    final_state: int
    final_margin: float
    final_gt_failure: bool | None
    min_margin: float
    violation_count: int
    intervention_count: int
    gt_failure_count: int | None
    odd_violation_steps: tuple[int, ...]

    @property
    def intervention_rate(self) -> float:
        return self.intervention_count / len(self.steps)

    def to_jsonl(self) -> bytes:
        self.check_conservation()
        lines = [json.dumps(s.to_json_dict(), sort_keys=True, allow_nan=False) for s in self.steps]
        return ("\n".join(lines) + "\n").encode("utf-8")

    def check_conservation(self) -> None:
        """Every consecutive record pair must satisfy the transition function."""
        states = [s.state for s in self.steps] + [self.final_state]
        for step, nxt in zip(self.steps, states[1:]):
            recomputed = int(
                self.spec.transitions[step.state, step.executed_action, step.human_action, step.observation]
            )
            if recomputed != nxt:
                raise RuntimeError(
                    f"trace violates the dynamics at t={step.t}: "
                    f"recorded successor {nxt}, dynamics give {recomputed}"
                )


def summary_csv(traces) -> str:
    """One row per rollout: min margin, violation count, intervention rate."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["min_margin", "violation_count", "intervention_rate"])
    for trace in traces:
        writer.writerow([repr(trace.min_margin), trace.violation_count, repr(trace.intervention_rate)])
    return out.getvalue()


def _resolve_state(spec: GameSpec, value) -> int:
    if isinstance(value, str):
        if spec.state_labels and value in spec.state_labels:
            return spec.state_labels.index(value)
        try:
            value = int(value)
        except ValueError:
            raise PolicyResolutionError(f"unknown state {value!r}") from None
    return _int_index(value, spec.num_states, "info state")


def _resolve_action(labels: tuple[str, ...], value: str, kind: str) -> int:
    if value in labels:
        return labels.index(value)
    try:
        index = int(value)
    except ValueError:
        raise PolicyResolutionError(f"unknown {kind} action {value!r}") from None
    if not 0 <= index < len(labels):
        raise PolicyResolutionError(f"{kind} action index {index} out of range [0, {len(labels)})")
    return index


def _task_chooser(doc: SpecDocument, selector: str, stream: SplitMix64):
    spec = doc.game
    if selector == "random":
        return lambda z, t: stream.randint(spec.num_ai_actions)
    if selector.startswith("constant:"):
        action = _resolve_action(spec.ai_actions, selector.split(":", 1)[1], "ai")
        return lambda z, t: action
    if selector in doc.task_policies:
        table = doc.task_policies[selector]
        return lambda z, t: table[z]
    raise PolicyResolutionError(f"unknown task policy {selector!r}")


def _human_chooser(doc: SpecDocument, selector: str, sol: ValueSolution, stream: SplitMix64):
    """Returns fn(z, executed_ai_action, t) -> human action index."""
    spec = doc.game
    if selector == "worst_case":
        return lambda z, a, t: int(sol.adversary_policy[z, a])
    if selector == "uniform":
        return lambda z, a, t: stream.choice(spec.action_bound[z])
    if selector == "off_odd":
        def violator(z, a, t):
            allowed = set(spec.action_bound[z])
            for b in range(spec.num_human_actions):
                if b not in allowed:
                    return b
            return spec.action_bound[z][0]

        return violator
    if selector.startswith("scripted:"):
        script = [
            _resolve_action(spec.human_actions, item.strip(), "human")
            for item in selector.split(":", 1)[1].split(",")
            if item.strip()
        ]
        if not script:
            raise PolicyResolutionError("scripted human policy needs at least one action")
        return lambda z, a, t: script[t % len(script)]
    if selector in doc.human_policies:
        table = doc.human_policies[selector]
        return lambda z, a, t: table[z]
    raise PolicyResolutionError(f"unknown human policy {selector!r}")


def _sample_observation(stream: SplitMix64, row) -> int:
    draw = stream.uniform()
    cumulative = 0.0
    last_positive = 0
    for o, p in enumerate(row):
        if p > 0.0:
            last_positive = o
            cumulative += p
            if draw < cumulative:
                return o
    return last_positive


def _initial_ground_truth(doc: SpecDocument, z0: int):
    gt = doc.ground_truth
    for s in range(gt.num_world_states):
        for h in range(gt.num_human_states):
            if int(gt.projection[s, h]) == z0:
                return s, h
    raise ValueError(f"ground truth has no configuration projecting to state {z0}")


def rollout(config: RolloutConfig, solution: ValueSolution | None = None) -> RolloutTrace:
    """Run one seeded rollout and return its trace."""
    doc = config.document
    spec = doc.game
    if config.max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {config.max_steps}")
    if config.filter_mode not in FILTER_MODES:
        raise ValueError(f"unknown filter mode {config.filter_mode!r}")

    sol = solution if solution is not None else value_iteration(spec)
    flt = perfect_filter(sol, intervention=config.filter_mode if config.filter_mode != "none" else SWITCH)
    stream = SplitMix64(config.seed)
    task = _task_chooser(doc, config.task_policy, stream)
    human = _human_chooser(doc, config.human_policy, sol, stream)
    off_odd = config.human_policy == "off_odd"

    z = _resolve_state(spec, config.initial_state)
    gt_state = _initial_ground_truth(doc, z) if doc.ground_truth is not None else None

    steps: list[RolloutStep] = []
    min_margin = float(spec.margins[z])
    violations = 1 if min_margin < 0.0 else 0
    interventions = 0
    gt_failures = 0 if gt_state is not None else None
    odd_steps: list[int] = []

    for t in range(config.max_steps):
        a_task = int(task(z, t))
        executed, record = filter_action(flt, z, a_task, t=t)
        if config.filter_mode == "none":
            executed = a_task
            record = InterventionRecord(
                t=t, state=z, task_action=a_task, monitor_value=record.monitor_value,
                intervened=False, executed_action=a_task,
            )
        if record.intervened:
            interventions += 1

        b = int(human(z, executed, t))
        in_bound = b in spec.action_bound[z]
        if not in_bound:
            if not off_odd:
                raise ValueError(
                    f"human policy {config.human_policy!r} left the admissible bound at t={t}; "
                    "use the off_odd policy to simulate non-compliant humans"
                )
            odd_steps.append(t)

        o = _sample_observation(stream, spec.observation_probs[z, executed, b])
        gt_failed = None
        if gt_state is not None:
            s, h = gt_state
            gt_failed = bool(doc.ground_truth.failure[s, h])
            if gt_failed:
                gt_failures += 1
            o_h = int(doc.ground_truth.human_observation[s])
            gt_state = (
                int(doc.ground_truth.world_transitions[s, executed, b]),
                int(doc.ground_truth.human_transitions[h, executed, b, o_h]),
            )

        steps.append(
            RolloutStep(
                t=t,
                state=z,
                task_action=a_task,
                monitor_value=record.monitor_value,
                intervened=record.intervened,
                executed_action=executed,
                human_action=b,
                observation=o,
                margin_value=float(spec.margins[z]),
                odd_violation=not in_bound,
                gt_failure=gt_failed,
            )
        )
        z = int(spec.transitions[z, executed, b, o])
        m = float(spec.margins[z])
        min_margin = min(min_margin, m)
        if m < 0.0:
            violations += 1

    final_gt_failure = None
    if gt_state is not None:
        final_gt_failure = bool(doc.ground_truth.failure[gt_state[0], gt_state[1]])
        if final_gt_failure:
            gt_failures += 1

    trace = RolloutTrace(
        spec=spec,
        steps=tuple(steps),
        final_state=z,
        final_margin=float(spec.margins[z]),
        final_gt_failure=final_gt_failure,
        min_margin=min_margin,
        violation_count=violations,
        intervention_count=interventions,
        gt_failure_count=gt_failures,
        odd_violation_steps=tuple(odd_steps),
    )
    trace.check_conservation()
    return trace


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CounterexampleStep:
    state: int
    task_action: int
    executed_action: int
    human_action: int
    observation: int

    def to_json_dict(self) -> dict:
        return {
            "z": self.state,
            "task_a": self.task_action,
            "executed_a": self.executed_action,
            "a_human": self.human_action,
            "obs": self.observation,
        }


@dataclass(frozen=True)
class Counterexample:
    initial_state: int
    steps: tuple[CounterexampleStep, ...]
    final_state: int
    final_margin: float


@dataclass(frozen=True)
class VerificationReport:
    mode: str  # "exhaustive" | "sampled"
    depth: int
    filter_mode: str
    certified_states: tuple[int, ...]
    counterexamples: tuple[Counterexample, ...]
    expanded: int

    @property
    def ok(self) -> bool:
        return not self.counterexamples


def _executed_table(spec: GameSpec, flt, filter_mode: str) -> np.ndarray:
    table = np.empty((spec.num_states, spec.num_ai_actions), dtype=np.int64)
    for z in range(spec.num_states):
        for a in range(spec.num_ai_actions):
            if filter_mode == "none":
                table[z, a] = a
            else:
                table[z, a], _ = filter_action(flt, z, a)
    return table


def verify_safety(
    doc: SpecDocument,
    *,
    depth: int = 8,
    filter_mode: str = SWITCH,
    exhaustive_limit: int = 1_000_000,
    samples: int = 10_000,
    seed: int = 0,
    max_nodes: int | None = None,
    solution: ValueSolution | None = None,
) -> VerificationReport:
    """Check that certified initial states cannot reach failure within ``depth``.

    Enumeration covers every task-action choice at every step; the point of
    the guarantee is that the task policy cannot matter.  Human actions
    range over the admissible bound, observations over positive-probability
    outcomes.

    Raises BudgetExceededError (carrying the partial report in ``partial``)
    if ``max_nodes`` expansions are exceeded.
    """
    spec = doc.game
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if filter_mode not in FILTER_MODES:
        raise ValueError(f"unknown filter mode {filter_mode!r}")

    sol = solution if solution is not None else value_iteration(spec)
    flt = perfect_filter(sol)
    certified = tuple(
        z for z in range(spec.num_states)
        if float(flt.monitor(z, int(flt.fallback[z]))) >= 0.0
    )
    executed = _executed_table(spec, perfect_filter(sol, intervention=filter_mode) if filter_mode != "none" else flt, filter_mode)

    joint = spec.num_states * spec.num_ai_actions * spec.num_human_actions * spec.num_observations
    exhaustive = spec.is_deterministic() and joint <= exhaustive_limit

    counterexamples: list[Counterexample] = []
    expanded = 0

    def over_budget():
        return max_nodes is not None and expanded > max_nodes

    if exhaustive:
        mode = "exhaustive"
        for z0 in certified:
            parent: dict[int, tuple | None] = {z0: None}
            frontier = [z0]
            hit = None
            for _ in range(depth):
                if hit or not frontier:
                    break
                nxt = []
                for z in frontier:
                    expanded += 1
                    if over_budget():
                        raise BudgetExceededError(
                            f"verification exceeded max_nodes={max_nodes}",
                            partial=VerificationReport(
                                mode="exhaustive", depth=depth, filter_mode=filter_mode,
                                certified_states=certified,
                                counterexamples=tuple(counterexamples), expanded=expanded,
                            ),
                        )
                    for a_task in range(spec.num_ai_actions):
                        a_exec = int(executed[z, a_task])
                        for b in spec.action_bound[z]:
                            for o in range(spec.num_observations):
                                if spec.observation_probs[z, a_exec, b, o] <= 0.0:
                                    continue
                                z2 = int(spec.transitions[z, a_exec, b, o])
                                if z2 in parent:
                                    continue
                                parent[z2] = (z, a_task, a_exec, b, o)
                                if spec.margins[z2] < 0.0:
                                    hit = z2
                                    break
                                nxt.append(z2)
                            if hit:
                                break
                        if hit:
                            break
                    if hit:
                        break
                frontier = nxt
            if hit is not None:
                counterexamples.append(_reconstruct(spec, parent, z0, hit))
    else:
        mode = "sampled"
        stream = SplitMix64(seed)
        per_state = max(1, samples // max(1, len(certified)))
        for z0 in certified:
            for _ in range(per_state):
                expanded += 1
                if over_budget():
                    raise BudgetExceededError(
                        f"verification exceeded max_nodes={max_nodes}",
                        partial=VerificationReport(
                            mode="sampled", depth=depth, filter_mode=filter_mode,
                            certified_states=certified,
                            counterexamples=tuple(counterexamples), expanded=expanded,
                        ),
                    )
                z = z0
                steps = []
                for _ in range(depth):
                    a_task = stream.randint(spec.num_ai_actions)
                    a_exec = int(executed[z, a_task])
                    b = stream.choice(spec.action_bound[z])
                    o = _sample_observation(stream, spec.observation_probs[z, a_exec, b])
                    steps.append(CounterexampleStep(z, a_task, a_exec, b, o))
                    z = int(spec.transitions[z, a_exec, b, o])
                    if spec.margins[z] < 0.0:
                        counterexamples.append(
                            Counterexample(z0, tuple(steps), z, float(spec.margins[z]))
                        )
                        break
                else:
                    continue
                break

    return VerificationReport(
        mode=mode,
        depth=depth,
        filter_mode=filter_mode,
        certified_states=certified,
        counterexamples=tuple(counterexamples),
        expanded=expanded,
    )


def _reconstruct(spec: GameSpec, parent: dict, z0: int, hit: int) -> Counterexample:
    steps = []
    z = hit
    while parent[z] is not None:
        prev, a_task, a_exec, b, o = parent[z]
        steps.append(CounterexampleStep(prev, a_task, a_exec, b, o))
        z = prev
    steps.reverse()
    return Counterexample(z0, tuple(steps), hit, float(spec.margins[hit]))


# ---------------------------------------------------------------------------
# oracle cross-check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleReport:
    horizon: int
    iterations: int
    converged: bool
    max_discrepancy: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_discrepancy <= self.tolerance


def compare_oracle(
    doc: SpecDocument | GameSpec,
    horizon: int | None = None,
    *,
    epsilon: float = 1e-9,
    node_budget: int = 10_000_000,
) -> OracleReport:
    """Largest gap between the sweeping solver and the game-tree recursion.

    The declared tolerance is zero for deterministic-observation games,
    where both routes compute identical floating-point values, and an
    epsilon-accumulation bound otherwise.
    """
    spec = doc.game if isinstance(doc, SpecDocument) else doc
    sol = value_iteration(spec, epsilon=epsilon)
    if horizon is None:
        horizon = sol.iterations
    worst = 0.0
    for z in range(spec.num_states):
        reference = brute_force_value(spec, z, horizon, node_budget=node_budget)
        worst = max(worst, abs(reference - float(sol.values[z])))
    tolerance = 0.0 if spec.is_deterministic() else max(1e-7, epsilon * sol.iterations)
    return OracleReport(
        horizon=horizon,
        iterations=sol.iterations,
        converged=sol.converged,
        max_discrepancy=worst,
        tolerance=tolerance,
    )
