from __future__ import annotations

import json

import pytest

from haig import (
    BudgetExceededError,
    PolicyResolutionError,
    RolloutConfig,
    RolloutTrace,
    build_chain,
    build_dialogue,
    compare_oracle,
    random_game,
    rollout,
    summary_csv,
    value_iteration,
    verify_safety,
)

_STEP_KEYS = {
    "t", "z", "task_a", "monitor", "intervened", "executed_a",
    "a_human", "obs", "margin",
}


def _chain_cfg(**overrides) -> RolloutConfig:
    fields = dict(
        document=build_chain(5),
        task_policy="constant:-1",
        human_policy="worst_case",
        filter_mode="switch",
        initial_state=3,
        max_steps=10,
        seed=1,
    )
    fields.update(overrides)
    return RolloutConfig(**fields)


def test_filtered_rollout_holds_the_line():
    trace = rollout(_chain_cfg())
    assert len(trace.steps) == 10
    assert trace.min_margin == 2.0
    assert trace.violation_count == 0
    assert trace.intervention_rate == 1.0
    assert trace.gt_failure_count == 0
    assert all(s.state == 3 and s.executed_action == 2 for s in trace.steps)
    assert trace.final_state == 3


def test_unfiltered_rollout_fails_fast():
    trace = rollout(_chain_cfg(filter_mode="none"))
    assert trace.min_margin == -1.0
    first_bad = next(s.t for s in trace.steps if s.margin_value < 0.0)
    assert first_bad == 2
    assert trace.violation_count == 9  # stuck in state 0 afterwards
    assert trace.intervention_count == 0
    # the mirrored ground truth fails exactly where the margin does
    assert trace.gt_failure_count == trace.violation_count
    assert trace.final_gt_failure is True


def test_fallback_only_rollout():
    trace = rollout(_chain_cfg(initial_state=1, filter_mode="fallback_only"))
    assert trace.min_margin == 0.0
    assert trace.violation_count == 0
    assert all(s.executed_action == 2 for s in trace.steps)


def test_least_restrictive_rollout():
    trace = rollout(_chain_cfg(task_policy="constant:0", filter_mode="least_restrictive"))
    assert trace.violation_count == 0
    # "0" keeps a positive monitor while the state is high enough to pass
    assert trace.steps[0].executed_action == 1


def test_counting_includes_the_terminal_state():
    cfg = _chain_cfg(initial_state=1, filter_mode="none", max_steps=1)
    trace = rollout(cfg)
    assert len(trace.steps) == 1
    # state 1, human -1, task -1 lands in the failure state at the end
    assert trace.final_state == 0
    assert trace.violation_count == 1
    assert trace.min_margin == -1.0


def test_rollout_from_failure_state_counts_it():
    trace = rollout(_chain_cfg(initial_state=0, max_steps=2))
    assert trace.steps[0].margin_value == -1.0
    assert trace.violation_count >= 1


def test_scripted_and_named_policies():
    doc = build_chain(5)
    cfg = _chain_cfg(task_policy="press_on", human_policy="scripted:+1,-1", seed=0)
    trace = rollout(cfg)
    human = [s.human_action for s in trace.steps]
    assert human[:4] == [2, 0, 2, 0]  # the script cycles

    hold = rollout(_chain_cfg(human_policy="hold", task_policy="constant:0"))
    assert all(s.human_action == 1 for s in hold.steps)

    patient = rollout(
        RolloutConfig(document=build_dialogue(), task_policy="eager_helper",
                      human_policy="patient", initial_state="start", max_steps=4)
    )
    assert all(s.human_action == 3 for s in patient.steps)
    assert patient.violation_count == 0


def test_uniform_human_stays_in_bound():
    doc = build_chain(5, human_reach=3, odd_reach=1)
    trace = rollout(_chain_cfg(document=doc, human_policy="uniform", max_steps=30))
    for s in trace.steps:
        assert s.human_action in doc.game.action_bound[s.state]
        assert not s.odd_violation
    assert trace.odd_violation_steps == ()


def test_off_odd_human_breaks_certified_safety():
    doc = build_chain(5, human_reach=3, odd_reach=1)
    trace = rollout(_chain_cfg(document=doc, human_policy="off_odd", max_steps=6))
    assert trace.odd_violation_steps == (0, 1, 2, 3, 4, 5)
    assert all(s.odd_violation for s in trace.steps)
    assert trace.min_margin == -1.0
    assert trace.violation_count > 0
    # every offending action was the full -3 push
    assert all(doc.game.human_actions[s.human_action] == "-3" for s in trace.steps)


def test_off_odd_degrades_to_compliance_when_bound_is_full():
    trace = rollout(_chain_cfg(human_policy="off_odd", max_steps=4))
    assert trace.odd_violation_steps == ()


def test_compliant_policies_may_not_leave_the_bound():
    doc = build_chain(5, human_reach=3, odd_reach=1)
    with pytest.raises(ValueError, match="off_odd"):
        rollout(_chain_cfg(document=doc, human_policy="scripted:-3"))


def test_policy_resolution_errors():
    with pytest.raises(PolicyResolutionError, match="unknown task policy"):
        rollout(_chain_cfg(task_policy="nope"))
    with pytest.raises(PolicyResolutionError, match="unknown human policy"):
        rollout(_chain_cfg(human_policy="nope"))
    with pytest.raises(PolicyResolutionError, match="unknown human action"):
        rollout(_chain_cfg(human_policy="scripted:fly"))
    with pytest.raises(PolicyResolutionError, match="at least one action"):
        rollout(_chain_cfg(human_policy="scripted:"))
    with pytest.raises(PolicyResolutionError, match="unknown state"):
        rollout(_chain_cfg(initial_state="nowhere"))
    with pytest.raises(ValueError, match="max_steps"):
        rollout(_chain_cfg(max_steps=0))
    with pytest.raises(ValueError, match="filter mode"):
        rollout(_chain_cfg(filter_mode="maybe"))


def test_trace_jsonl_shape_and_determinism():
    cfg = _chain_cfg(task_policy="random", human_policy="uniform", seed=9)
    blob = rollout(cfg).to_jsonl()
    assert blob == rollout(cfg).to_jsonl()
    assert blob != rollout(_chain_cfg(task_policy="random", human_policy="uniform", seed=10)).to_jsonl()

    lines = blob.decode("utf-8").splitlines()
    assert len(lines) == 10
    for t, line in enumerate(lines):
        record = json.loads(line)
        assert set(record) == _STEP_KEYS | {"gt_failure"}
        assert record["t"] == t
        assert list(record) == sorted(record)


def test_trace_flags_appear_only_when_set():
    doc = build_chain(5, human_reach=3, odd_reach=1)
    blob = rollout(_chain_cfg(document=doc, human_policy="off_odd", max_steps=2)).to_jsonl()
    for line in blob.decode().splitlines():
        assert json.loads(line)["odd_violation"] is True

    no_gt = random_game(2, states=6, failure_fraction=0.0)
    cfg = RolloutConfig(document=no_gt, task_policy="random", human_policy="uniform", max_steps=3)
    for line in rollout(cfg).to_jsonl().decode().splitlines():
        assert set(json.loads(line)) == _STEP_KEYS


def test_tampered_trace_fails_conservation():
    trace = rollout(_chain_cfg(max_steps=3))
    bad_steps = list(trace.steps)
    bad_steps[1] = bad_steps[1].__class__(**{**bad_steps[1].__dict__, "state": 5})
    tampered = RolloutTrace(
        spec=trace.spec, steps=tuple(bad_steps), final_state=trace.final_state,
        final_margin=trace.final_margin, final_gt_failure=trace.final_gt_failure,
        min_margin=trace.min_margin, violation_count=trace.violation_count,
        intervention_count=trace.intervention_count, gt_failure_count=trace.gt_failure_count,
        odd_violation_steps=trace.odd_violation_steps,
    )
    with pytest.raises(RuntimeError, match="dynamics"):
        tampered.to_jsonl()


def test_summary_csv():
    trace = rollout(_chain_cfg())
    text = summary_csv([trace, trace])
    assert text.splitlines() == [
        "min_margin,violation_count,intervention_rate",
        "2.0,0,1.0",
        "2.0,0,1.0",
    ]


def test_verify_certifies_the_chain():
    report = verify_safety(build_chain(5), depth=10)
    assert report.mode == "exhaustive"
    assert report.certified_states == (1, 2, 3, 4, 5)
    assert report.ok
    assert report.expanded == 21


def test_verify_control_arm_finds_counterexamples():
    report = verify_safety(build_chain(5), depth=10, filter_mode="none")
    assert not report.ok
    assert len(report.counterexamples) == 5  # every certified start can be pushed out
    by_start = {ce.initial_state: ce for ce in report.counterexamples}
    assert len(by_start[3].steps) == 2  # breadth-first, so shortest path first
    assert by_start[1].final_margin == -1.0

    # each counterexample replays through the raw dynamics into the failure set
    spec = build_chain(5).game
    for ce in report.counterexamples:
        z = ce.initial_state
        for step in ce.steps:
            assert step.state == z
            z = int(spec.transitions[z, step.executed_action, step.human_action, step.observation])
        assert z == ce.final_state
        assert spec.margins[z] < 0.0


def test_verify_dialogue():
    report = verify_safety(build_dialogue(), depth=8)
    assert report.certified_states == (0, 1, 3, 4, 5, 6)
    assert report.ok
    conservative = verify_safety(build_dialogue(conservative_bound=True), depth=8)
    assert conservative.certified_states == (6,)
    assert conservative.ok


def test_verify_sampled_mode():
    doc = build_chain(5)
    filtered = verify_safety(doc, depth=8, exhaustive_limit=1, samples=400, seed=3)
    assert filtered.mode == "sampled"
    assert filtered.ok

    control = verify_safety(doc, depth=8, filter_mode="none", exhaustive_limit=1, samples=400, seed=3)
    assert control.mode == "sampled"
    assert not control.ok

    stochastic = random_game(6, states=10, observations=2, failure_fraction=0.2)
    report = verify_safety(stochastic, depth=6, samples=500, seed=0)
    assert report.mode == "sampled"  # stochastic games cannot be enumerated exactly


def test_verify_budget():
    with pytest.raises(BudgetExceededError) as info:
        verify_safety(build_chain(5), depth=10, max_nodes=2)
    partial = info.value.partial
    assert partial is not None
    assert partial.expanded == 3
    assert partial.certified_states == (1, 2, 3, 4, 5)


def test_verify_argument_validation():
    with pytest.raises(ValueError, match="depth"):
        verify_safety(build_chain(5), depth=0)
    with pytest.raises(ValueError, match="filter mode"):
        verify_safety(build_chain(5), filter_mode="what")


def test_compare_oracle_deterministic_is_exact():
    report = compare_oracle(build_chain(5))
    assert report.horizon == 1
    assert report.max_discrepancy == 0.0
    assert report.tolerance == 0.0
    assert report.ok


def test_compare_oracle_stochastic_within_tolerance():
    report = compare_oracle(random_game(3, states=8, observations=2, failure_fraction=0.3))
    assert report.converged
    assert report.ok
    assert report.tolerance >= 1e-7


def test_compare_oracle_truncated_horizon_reports_the_gap():
    report = compare_oracle(build_chain(5, human_reach=2), horizon=0)
    assert report.iterations == 6
    assert report.max_discrepancy == 5.0  # margin 4 at the top against value -1
    assert not report.ok
