from __future__ import annotations

import json

import numpy as np
import pytest

from haig import (
    DistributionError,
    GameSpec,
    HaigError,
    SchemaError,
    SerializationError,
    SpecDocument,
    SpecReferenceError,
    SpecSyntaxError,
    build_chain,
    build_dialogue,
    load_spec,
    parse_spec,
    random_game,
    save_spec,
    serialize,
)

_MINIMAL = {
    "format_version": "1",
    "game": {
        "states": ["safe", "doom"],
        "ai_actions": ["stay", "go"],
        "human_actions": ["stay", "go"],
        "observations": ["none"],
        "transition": [
            [[[0], [0]], [[0], [1]]],
            [[[1], [1]], [[1], [1]]],
        ],
        "margin": [1.0, -1.0],
        "action_bound": [[0, 1], [0, 1]],
    },
}


def _payload(**game_overrides) -> dict:
    payload = json.loads(json.dumps(_MINIMAL))
    payload["game"].update(game_overrides)
    return payload


def _parse(payload) -> SpecDocument:
    return parse_spec(json.dumps(payload))


def _corpus() -> list[SpecDocument]:
    return [
        build_chain(5),
        build_chain(5, 2),
        build_chain(6, 3, 2),
        build_dialogue(),
        build_dialogue(conservative_bound=True),
        random_game(0),
        random_game(11, states=9, ai_actions=2, human_actions=4, observations=3),
        random_game(42, states=3, failure_fraction=1.0),
    ]


def test_round_trip_is_identity():
    for doc in _corpus():
        data = serialize(doc)
        back = parse_spec(data)
        assert back == doc, doc.game.scenario
        assert serialize(back) == data, doc.game.scenario


def test_serialization_is_canonical():
    data = serialize(build_chain(5))
    assert data.endswith(b"\n")
    assert data == data.strip() + b"\n"
    data.decode("ascii")
    obj = json.loads(data)
    assert list(obj) == sorted(obj)
    assert list(obj["game"]) == sorted(obj["game"])


def test_minimal_document_parses():
    doc = _parse(_MINIMAL)
    assert doc.game.num_states == 2
    assert doc.game.state_labels == ("safe", "doom")
    assert doc.game.margins.tolist() == [1.0, -1.0]
    # single observation lets observation_probs default to certainty
    assert doc.game.observation_probs.tolist() == np.ones((2, 2, 2, 1)).tolist()
    assert doc.ground_truth is None
    assert doc.task_policies == {}


def test_states_as_count_round_trips_without_labels():
    doc = _parse(_payload(states=2))
    assert doc.game.state_labels is None
    assert json.loads(serialize(doc))["game"]["states"] == 2
    back = parse_spec(serialize(doc))
    assert back == doc


def test_labels_resolve_everywhere():
    payload = _payload(
        transition={"default": "self", "entries": [["safe", "go", "go", "none", "doom"]]},
        action_bound=[["stay", "go"], ["stay", 1]],
    )
    payload["policies"] = {"task": {"cautious": ["stay", "stay"]}, "human": {"bold": ["go", "go"]}}
    doc = _parse(payload)
    assert doc.game.transitions[0, 1, 1, 0] == 1
    assert doc.game.transitions[0, 0, 0, 0] == 0  # default: self
    assert doc.game.action_bound == ((0, 1), (0, 1))
    assert doc.task_policies == {"cautious": (0, 0)}
    assert doc.human_policies == {"bold": (1, 1)}


def test_sparse_and_dense_transitions_agree():
    dense = _parse(_MINIMAL)
    sparse = _parse(
        _payload(
            transition={
                "default": 0,
                "entries": [
                    [0, 1, 1, 0, 1],
                    [1, 0, 0, 0, 1],
                    [1, 0, 1, 0, 1],
                    [1, 1, 0, 0, 1],
                    [1, 1, 1, 0, 1],
                ],
            }
        )
    )
    assert sparse.game == dense.game
    # canonical output is always dense
    assert serialize(sparse) == serialize(dense)


def test_sparse_transition_errors():
    with pytest.raises(SchemaError, match="undefined"):
        _parse(_payload(transition={"entries": [[0, 0, 0, 0, 0]]}))
    with pytest.raises(SchemaError, match="duplicates"):
        _parse(_payload(transition={"default": 0, "entries": [[0, 0, 0, 0, 0], [0, 0, 0, 0, 1]]}))
    with pytest.raises(SchemaError, match="unknown sparse"):
        _parse(_payload(transition={"default": 0, "entries": [], "extra": 1}))
    with pytest.raises(SchemaError, match="must be \\[state"):
        _parse(_payload(transition={"default": 0, "entries": [[0, 0, 0, 0]]}))


def test_reference_errors():
    with pytest.raises(SpecReferenceError, match="out of range"):
        _parse(_payload(transition={"default": 0, "entries": [[0, 0, 0, 0, 7]]}))
    with pytest.raises(SpecReferenceError, match="unknown state name"):
        _parse(_payload(transition={"default": "nowhere", "entries": []}))
    with pytest.raises(SpecReferenceError, match="unknown human action"):
        _parse(_payload(action_bound=[["sprint"], [0]]))
    with pytest.raises(SchemaError, match="must be an integer or label"):
        _parse(_payload(transition={"default": True, "entries": []}))


def test_syntax_errors_carry_position():
    with pytest.raises(SpecSyntaxError) as info:
        parse_spec('{"format_version": "1",\n  "game": }')
    assert info.value.line == 2
    assert info.value.column is not None
    with pytest.raises(SpecSyntaxError, match="NaN"):
        parse_spec('{"format_version": "1", "game": {"margin": [NaN]}}')
    with pytest.raises(SpecSyntaxError, match="Infinity"):
        parse_spec('{"x": -Infinity}')
    with pytest.raises(SpecSyntaxError, match="UTF-8"):
        parse_spec(b"\xff\xfe{}")


def test_schema_errors():
    with pytest.raises(SchemaError, match="format_version"):
        parse_spec("{}")
    with pytest.raises(SchemaError, match="unsupported format_version"):
        _parse({"format_version": "2", "game": _MINIMAL["game"]})
    with pytest.raises(SchemaError, match="unknown top-level"):
        _parse({**_MINIMAL, "bonus": 1})
    with pytest.raises(SchemaError, match="must be an object"):
        parse_spec("[1, 2, 3]")
    with pytest.raises(SchemaError, match="unknown game keys"):
        _parse(_payload(surprise=True))
    with pytest.raises(SchemaError, match="game.states"):
        _parse(_payload(states=True))
    with pytest.raises(SchemaError, match="must be positive"):
        _parse(_payload(states=0))
    with pytest.raises(SchemaError, match="distinct"):
        _parse(_payload(ai_actions=["a", "a"]))
    with pytest.raises(SchemaError, match="margin"):
        _parse(_payload(margin=[1.0]))
    # 1e999 overflows to inf while parsing without hitting the constant hook
    raw = json.dumps(_payload(margin=[123456789.0, -1.0])).replace("123456789.0", "1e999")
    with pytest.raises(SchemaError, match="finite"):
        parse_spec(raw)
    with pytest.raises(SchemaError, match="non-empty"):
        _parse(_payload(action_bound=[[], [0]]))


def test_distribution_errors():
    probs = [[[[0.5], [1.0]], [[1.0], [1.0]]], [[[1.0], [1.0]], [[1.0], [1.0]]]]
    with pytest.raises(DistributionError, match="sums to 0.5"):
        _parse(_payload(observation_probs=probs))
    probs2 = json.loads(json.dumps(probs))
    probs2[0][0][0] = [-0.5]
    with pytest.raises(DistributionError):
        _parse(_payload(observation_probs=probs2))


def test_observation_probs_required_with_multiple_observations():
    payload = _payload(observations=["ping", "pong"])
    payload["game"]["transition"] = [
        [[[0, 0], [0, 0]], [[0, 0], [1, 1]]],
        [[[1, 1], [1, 1]], [[1, 1], [1, 1]]],
    ]
    with pytest.raises(SchemaError, match="omitted only with a single observation"):
        _parse(payload)
    payload["game"]["observation_probs"] = [
        [[[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]]],
        [[[1.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]]],
    ]
    doc = _parse(payload)
    assert not doc.game.is_deterministic()


def test_action_bound_deduplicates():
    doc = _parse(_payload(action_bound=[["go", "go", "stay"], [1]]))
    assert doc.game.action_bound == ((0, 1), (1,))


def test_policies_errors():
    payload = _payload()
    payload["policies"] = {"task": {"bad": ["stay"]}}
    with pytest.raises(SchemaError, match="one action per state"):
        _parse(payload)
    payload["policies"] = {"referee": {}}
    with pytest.raises(SchemaError, match="unknown policies keys"):
        _parse(payload)
    payload["policies"] = {"human": {"odd": ["go", "sprint"]}}
    with pytest.raises(SpecReferenceError, match="sprint"):
        _parse(payload)


def test_ground_truth_round_trip_and_errors():
    doc = build_chain(4)
    raw = json.loads(serialize(doc))
    assert "ground_truth" in raw
    assert parse_spec(json.dumps(raw)) == doc

    bad = json.loads(json.dumps(raw))
    bad["ground_truth"]["projection"][0][0] = 99
    with pytest.raises(SpecReferenceError, match="projection"):
        parse_spec(json.dumps(bad))

    bad = json.loads(json.dumps(raw))
    bad["ground_truth"]["privileged_failure"][0][0] = "yes"
    with pytest.raises(SchemaError, match="booleans"):
        parse_spec(json.dumps(bad))

    bad = json.loads(json.dumps(raw))
    bad["ground_truth"]["spare"] = 1
    with pytest.raises(SchemaError, match="unknown ground_truth keys"):
        parse_spec(json.dumps(bad))

    bad = json.loads(json.dumps(raw))
    bad["ground_truth"]["world_states"] = 0
    with pytest.raises(SchemaError, match="positive integer"):
        parse_spec(json.dumps(bad))


def test_model_level_validation_applies_at_parse():
    """Structural checks run on the assembled game, not only on JSON shape."""
    bad = _payload(annotations=[["a"], ["b"], ["c"]])
    with pytest.raises(SchemaError, match="annotations"):
        _parse(bad)


def test_serialize_rejects_non_finite():
    game = build_chain(3).game
    broken = GameSpec(
        num_states=game.num_states,
        ai_actions=game.ai_actions,
        human_actions=game.human_actions,
        observations=game.observations,
        transitions=game.transitions,
        observation_probs=game.observation_probs,
        margins=np.array([np.nan, 0.0, 1.0, 2.0]),
        action_bound=game.action_bound,
    )
    with pytest.raises(SerializationError):
        serialize(SpecDocument(game=broken))


def test_save_and_load(tmp_path):
    path = tmp_path / "game.haig.json"
    doc = build_dialogue()
    save_spec(doc, path)
    assert load_spec(path) == doc
    assert path.read_bytes() == serialize(doc)


def test_every_mutation_is_rejected_with_a_haig_error():
    """A sweep of corruptions must all fail loudly, never parse quietly."""
    base = json.loads(serialize(build_chain(4)))

    def mutate(fn):
        payload = json.loads(json.dumps(base))
        fn(payload)
        return json.dumps(payload)

    mutations = [
        lambda p: p.pop("format_version"),
        lambda p: p.update(format_version="0"),
        lambda p: p["game"].pop("transition"),
        lambda p: p["game"].pop("margin"),
        lambda p: p["game"].pop("action_bound"),
        lambda p: p["game"]["transition"][0][0][0].__setitem__(0, 99),
        lambda p: p["game"]["margin"].append(0.0),
        lambda p: p["game"]["margin"].__setitem__(0, "low"),
        lambda p: p["game"]["observation_probs"][0][0][0].__setitem__(0, 0.25),
        lambda p: p["game"]["action_bound"].__setitem__(0, []),
        lambda p: p["game"]["human_actions"].pop(),
        lambda p: p["ground_truth"].pop("projection"),
        lambda p: p["ground_truth"]["ai_observation"][0][0].__setitem__(0, 3),
        lambda p: p["policies"]["task"]["press_on"].pop(),
    ]
    for i, fn in enumerate(mutations):
        with pytest.raises(HaigError):
            parse_spec(mutate(fn))
