"""Reading and writing ``.haig.json`` game documents.

A document is a single UTF-8 JSON object with top-level keys
``format_version`` (currently ``"1"``), ``game``, and optionally
``ground_truth`` and ``policies``.

The ``game`` object:

* ``states``: either an integer count or a list of distinct state labels.
* ``ai_actions`` / ``human_actions`` / ``observations``: lists of distinct
  labels.
* ``transition``: dense nested arrays indexed ``[z][a_ai][a_h][o]`` whose
  entries are next states, or a sparse object
  ``{"default": <state or "self">, "entries": [[z, a_ai, a_h, o, next], ...]}``.
  Anywhere a state, action, or observation is expected, both integer
  indices and declared labels are accepted; labels resolve at parse time
  and all in-memory data uses indices only.
* ``observation_probs``: dense ``[z][a_ai][a_h][o]`` probabilities. May be
  omitted when there is exactly one observation.
* ``margin``: one number per state, negative exactly on failure states.
* ``action_bound``: per state, a non-empty list of admissible human actions.
* optionally ``scenario`` (free-form tag) and ``annotations`` (per-state
  lists of strings, carried verbatim; nothing computes on them).

``ground_truth`` mirrors :class:`haig.model.GroundTruthSystem`;
``policies`` holds named deterministic per-state action tables under
``task`` and ``human``.

``serialize`` is canonical: keys sorted, arrays dense, entries in index
order, floats in shortest round-trip form, ASCII output, one trailing
newline.  Structurally equal documents serialize to identical bytes, and
``parse_spec(serialize(doc)) == doc``.  NaN and infinity are rejected in
both directions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DistributionError,
    SchemaError,
    SerializationError,
    SpecReferenceError,
    SpecSyntaxError,
)
from .model import GameSpec, GroundTruthSystem, validate_model

FORMAT_VERSION = "1"


@dataclass(frozen=True, eq=False)
class SpecDocument:
    game: GameSpec
    ground_truth: GroundTruthSystem | None = None
    task_policies: dict[str, tuple[int, ...]] = field(default_factory=dict)
    human_policies: dict[str, tuple[int, ...]] = field(default_factory=dict)
    format_version: str = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(
            self, "task_policies", {k: tuple(int(a) for a in v) for k, v in self.task_policies.items()}
        )
        object.__setattr__(
            self, "human_policies", {k: tuple(int(a) for a in v) for k, v in self.human_policies.items()}
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpecDocument):
            return NotImplemented
        return (
            self.format_version == other.format_version
            and self.game == other.game
            and self.ground_truth == other.ground_truth
            and self.task_policies == other.task_policies
            and self.human_policies == other.human_policies
        )


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def parse_spec(data: bytes | str) -> SpecDocument:
    """Parse and fully validate a document.

    Raises:
        SpecSyntaxError: malformed JSON or a NaN/Infinity literal.
        SchemaError: missing/mistyped keys, wrong arity, empty action bound.
        SpecReferenceError: an unknown label or out-of-range index.
        DistributionError: a bad observation probability row.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            data = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SpecSyntaxError(f"document is not valid UTF-8: {exc}") from None

    def _constant(token):
        raise SpecSyntaxError(f"forbidden JSON constant {token!r}")

    try:
        raw = json.loads(data, parse_constant=_constant)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(exc.msg, line=exc.lineno, column=exc.colno) from None

    root = _mapping(raw, "document")
    version = _require(root, "format_version", "document")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION!r}")
    known = {"format_version", "game", "ground_truth", "policies"}
    extra = sorted(set(root) - known)
    if extra:
        raise SchemaError(f"unknown top-level keys: {extra}")

    game = _parse_game(_mapping(_require(root, "game", "document"), "game"))
    ground_truth = None
    if "ground_truth" in root:
        ground_truth = _parse_ground_truth(_mapping(root["ground_truth"], "ground_truth"), game)
    task_policies, human_policies = _parse_policies(root.get("policies"), game)

    report = validate_model(game, ground_truth)
    for item in report.errors:
        if item.code == "distribution":
            raise DistributionError(item.message)
        raise SchemaError(item.message)

    return SpecDocument(
        game=game,
        ground_truth=ground_truth,
        task_policies=task_policies,
        human_policies=human_policies,
        format_version=version,
    )


def load_spec(path) -> SpecDocument:
    with open(path, "rb") as fh:
        return parse_spec(fh.read())


def _mapping(value, path):
    if not isinstance(value, dict):
        raise SchemaError(f"{path} must be an object, got {type(value).__name__}")
    return value


def _require(obj, key, path):
    if key not in obj:
        raise SchemaError(f"{path} is missing required key {key!r}")
    return obj[key]


def _label_list(value, path) -> tuple[str, ...]:
    if not isinstance(value, list) or not value:
        raise SchemaError(f"{path} must be a non-empty array of labels")
    if any(not isinstance(v, str) for v in value):
        raise SchemaError(f"{path} entries must be strings")
    if len(set(value)) != len(value):
        raise SchemaError(f"{path} labels must be distinct")
    return tuple(value)


class _Resolver:
    """Resolves index-or-label references for one entity kind."""

    def __init__(self, kind: str, size: int, labels: tuple[str, ...] | None):
        self.kind = kind
        self.size = size
        self.by_label = {lab: i for i, lab in enumerate(labels)} if labels else {}

    def __call__(self, value, path) -> int:
        if isinstance(value, bool):
            raise SchemaError(f"{path}: {self.kind} reference must be an integer or label")
        if isinstance(value, int):
            if not 0 <= value < self.size:
                raise SpecReferenceError(
                    f"{path}: {self.kind} index {value} out of range [0, {self.size})"
                )
            return value
        if isinstance(value, str):
            if value not in self.by_label:
                raise SpecReferenceError(f"{path}: unknown {self.kind} name {value!r}")
            return self.by_label[value]
        raise SchemaError(f"{path}: {self.kind} reference must be an integer or label")


def _number(value, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path} must be a number")
    return float(value)


def _parse_game(game: dict) -> GameSpec:
    states = _require(game, "states", "game")
    if isinstance(states, bool):
        raise SchemaError("game.states must be a count or a label array")
    if isinstance(states, int):
        if states <= 0:
            raise SchemaError(f"game.states must be positive, got {states}")
        num_states, state_labels = states, None
    elif isinstance(states, list):
        state_labels = _label_list(states, "game.states")
        num_states = len(state_labels)
    else:
        raise SchemaError("game.states must be a count or a label array")

    ai_actions = _label_list(_require(game, "ai_actions", "game"), "game.ai_actions")
    human_actions = _label_list(_require(game, "human_actions", "game"), "game.human_actions")
    observations = _label_list(_require(game, "observations", "game"), "game.observations")

    res_state = _Resolver("state", num_states, state_labels)
    res_ai = _Resolver("ai action", len(ai_actions), ai_actions)
    res_human = _Resolver("human action", len(human_actions), human_actions)
    res_obs = _Resolver("observation", len(observations), observations)

    shape = (num_states, len(ai_actions), len(human_actions), len(observations))
    transitions = _parse_transition(
        _require(game, "transition", "game"), shape, res_state, res_ai, res_human, res_obs
    )
    observation_probs = _parse_observation_probs(game.get("observation_probs"), shape)

    margin_raw = _require(game, "margin", "game")
    if not isinstance(margin_raw, list) or len(margin_raw) != num_states:
        raise SchemaError(f"game.margin must be an array of {num_states} numbers")
    margins = np.array([_number(m, f"game.margin[{i}]") for i, m in enumerate(margin_raw)])
    if not np.all(np.isfinite(margins)):
        raise SchemaError("game.margin entries must be finite")

    bound_raw = _require(game, "action_bound", "game")
    if not isinstance(bound_raw, list) or len(bound_raw) != num_states:
        raise SchemaError(f"game.action_bound must be an array of {num_states} rows")
    bound = []
    for z, row in enumerate(bound_raw):
        if not isinstance(row, list) or not row:
            raise SchemaError(f"game.action_bound[{z}] must be a non-empty array")
        resolved = sorted({res_human(b, f"game.action_bound[{z}]") for b in row})
        bound.append(tuple(resolved))

    annotations = None
    if "annotations" in game:
        ann_raw = game["annotations"]
        if not isinstance(ann_raw, list) or len(ann_raw) != num_states:
            raise SchemaError(f"game.annotations must be an array of {num_states} rows")
        annotations = []
        for z, row in enumerate(ann_raw):
            if not isinstance(row, list) or any(not isinstance(a, str) for a in row):
                raise SchemaError(f"game.annotations[{z}] must be an array of strings")
            annotations.append(tuple(row))
        annotations = tuple(annotations)

    scenario = game.get("scenario")
    if scenario is not None and not isinstance(scenario, str):
        raise SchemaError("game.scenario must be a string")

    known = {
        "states", "ai_actions", "human_actions", "observations", "transition",
        "observation_probs", "margin", "action_bound", "scenario", "annotations",
    }
    extra = sorted(set(game) - known)
    if extra:
        raise SchemaError(f"unknown game keys: {extra}")

    return GameSpec(
        num_states=num_states,
        ai_actions=ai_actions,
        human_actions=human_actions,
        observations=observations,
        transitions=transitions,
        observation_probs=observation_probs,
        margins=margins,
        action_bound=tuple(bound),
        state_labels=state_labels,
        scenario=scenario,
        annotations=annotations,
    )


def _parse_transition(raw, shape, res_state, res_ai, res_human, res_obs) -> np.ndarray:
    nz, na, nb, no = shape
    out = np.empty(shape, dtype=np.int64)
    if isinstance(raw, dict):
        known = {"default", "entries"}
        extra = sorted(set(raw) - known)
        if extra:
            raise SchemaError(f"unknown sparse transition keys: {extra}")
        entries = _require(raw, "entries", "game.transition")
        if not isinstance(entries, list):
            raise SchemaError("game.transition.entries must be an array")
        filled = np.zeros(shape, dtype=bool)
        has_default = "default" in raw
        for i, entry in enumerate(entries):
            path = f"game.transition.entries[{i}]"
            if not isinstance(entry, list) or len(entry) != 5:
                raise SchemaError(f"{path} must be [state, ai_action, human_action, observation, next]")
            z = res_state(entry[0], path)
            a = res_ai(entry[1], path)
            b = res_human(entry[2], path)
            o = res_obs(entry[3], path)
            if filled[z, a, b, o]:
                raise SchemaError(f"{path} duplicates an earlier entry")
            out[z, a, b, o] = res_state(entry[4], path)
            filled[z, a, b, o] = True
        if has_default:
            default = raw["default"]
            if default == "self":
                idx = np.argwhere(~filled)
                out[~filled] = idx[:, 0] if idx.size else 0
            else:
                out[~filled] = res_state(default, "game.transition.default")
        elif not filled.all():
            missing = np.argwhere(~filled)[0]
            raise SchemaError(
                "sparse transition without default leaves "
                f"(z={missing[0]}, a_ai={missing[1]}, a_h={missing[2]}, o={missing[3]}) undefined"
            )
        return out

    if not isinstance(raw, list):
        raise SchemaError("game.transition must be a dense nested array or a sparse object")
    if len(raw) != nz:
        raise SchemaError(f"game.transition has {len(raw)} state rows, expected {nz}")
    for z, by_ai in enumerate(raw):
        if not isinstance(by_ai, list) or len(by_ai) != na:
            raise SchemaError(f"game.transition[{z}] must have {na} ai-action rows")
        for a, by_h in enumerate(by_ai):
            if not isinstance(by_h, list) or len(by_h) != nb:
                raise SchemaError(f"game.transition[{z}][{a}] must have {nb} human-action rows")
            for b, by_o in enumerate(by_h):
                if not isinstance(by_o, list) or len(by_o) != no:
                    raise SchemaError(f"game.transition[{z}][{a}][{b}] must have {no} observation entries")
                for o, dest in enumerate(by_o):
                    out[z, a, b, o] = res_state(dest, f"game.transition[{z}][{a}][{b}][{o}]")
    return out


def _parse_observation_probs(raw, shape) -> np.ndarray:
    nz, na, nb, no = shape
    if raw is None:
        if no != 1:
            raise SchemaError("game.observation_probs may be omitted only with a single observation")
        return np.ones(shape)
    out = np.empty(shape)
    if not isinstance(raw, list) or len(raw) != nz:
        raise SchemaError(f"game.observation_probs must have {nz} state rows")
    for z, by_ai in enumerate(raw):
        if not isinstance(by_ai, list) or len(by_ai) != na:
            raise SchemaError(f"game.observation_probs[{z}] must have {na} ai-action rows")
        for a, by_h in enumerate(by_ai):
            if not isinstance(by_h, list) or len(by_h) != nb:
                raise SchemaError(f"game.observation_probs[{z}][{a}] must have {nb} human-action rows")
            for b, row in enumerate(by_h):
                if not isinstance(row, list) or len(row) != no:
                    raise SchemaError(
                        f"game.observation_probs[{z}][{a}][{b}] must have {no} entries"
                    )
                for o, p in enumerate(row):
                    out[z, a, b, o] = _number(p, f"game.observation_probs[{z}][{a}][{b}][{o}]")
    return out


def _parse_ground_truth(gt: dict, game: GameSpec) -> GroundTruthSystem:
    def _count(key):
        value = _require(gt, key, "ground_truth")
        if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
            raise SchemaError(f"ground_truth.{key} must be a positive integer")
        return value

    ns = _count("world_states")
    nh = _count("human_states")
    noh = _count("human_observations")
    na, nb = game.num_ai_actions, game.num_human_actions

    def _int_array(key, shape, size, kind):
        raw = _require(gt, key, "ground_truth")
        arr = _nested_ints(raw, shape, f"ground_truth.{key}")
        if arr.size and (arr.min() < 0 or arr.max() >= size):
            raise SpecReferenceError(
                f"ground_truth.{key}: {kind} index out of range [0, {size})"
            )
        return arr

    world_transitions = _int_array("world_dynamics", (ns, na, nb), ns, "world state")
    human_transitions = _int_array("human_dynamics", (nh, na, nb, noh), nh, "human state")
    human_observation = _int_array("human_observation", (ns,), noh, "human observation")
    ai_observation = _int_array("ai_observation", (ns, na, nb), game.num_observations, "observation")
    projection = _int_array("projection", (ns, nh), game.num_states, "state")

    fail_raw = _require(gt, "privileged_failure", "ground_truth")
    failure = np.empty((ns, nh), dtype=bool)
    if not isinstance(fail_raw, list) or len(fail_raw) != ns:
        raise SchemaError(f"ground_truth.privileged_failure must have {ns} rows")
    for s, row in enumerate(fail_raw):
        if not isinstance(row, list) or len(row) != nh or any(not isinstance(v, bool) for v in row):
            raise SchemaError(
                f"ground_truth.privileged_failure[{s}] must be an array of {nh} booleans"
            )
        failure[s] = row

    known = {
        "world_states", "human_states", "human_observations", "world_dynamics",
        "human_dynamics", "human_observation", "ai_observation", "privileged_failure",
        "projection",
    }
    extra = sorted(set(gt) - known)
    if extra:
        raise SchemaError(f"unknown ground_truth keys: {extra}")

    return GroundTruthSystem(
        num_world_states=ns,
        num_human_states=nh,
        num_human_observations=noh,
        world_transitions=world_transitions,
        human_transitions=human_transitions,
        human_observation=human_observation,
        ai_observation=ai_observation,
        failure=failure,
        projection=projection,
    )


def _nested_ints(raw, shape, path) -> np.ndarray:
    out = np.empty(shape, dtype=np.int64)

    def fill(node, dims, index, node_path):
        if not dims:
            if isinstance(node, bool) or not isinstance(node, int):
                raise SchemaError(f"{node_path} must be an integer")
            out[index] = node
            return
        if not isinstance(node, list) or len(node) != dims[0]:
            raise SchemaError(f"{node_path} must be an array of length {dims[0]}")
        for i, child in enumerate(node):
            fill(child, dims[1:], index + (i,), f"{node_path}[{i}]")

    fill(raw, list(shape), (), path)
    return out


def _parse_policies(raw, game: GameSpec):
    if raw is None:
        return {}, {}
    raw = _mapping(raw, "policies")
    extra = sorted(set(raw) - {"task", "human"})
    if extra:
        raise SchemaError(f"unknown policies keys: {extra}")

    res_ai = _Resolver("ai action", game.num_ai_actions, game.ai_actions)
    res_human = _Resolver("human action", game.num_human_actions, game.human_actions)

    def _tables(key, resolver):
        section = raw.get(key)
        if section is None:
            return {}
        section = _mapping(section, f"policies.{key}")
        tables = {}
        for name, table in section.items():
            path = f"policies.{key}[{name!r}]"
            if not isinstance(table, list) or len(table) != game.num_states:
                raise SchemaError(f"{path} must list one action per state")
            tables[name] = tuple(resolver(a, path) for a in table)
        return tables

    return _tables("task", res_ai), _tables("human", res_human)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def serialize(doc: SpecDocument) -> bytes:
    """Canonical bytes for ``doc``. See the module docstring for the form."""
    payload = {"format_version": doc.format_version, "game": _game_payload(doc.game)}
    if doc.ground_truth is not None:
        payload["ground_truth"] = _ground_truth_payload(doc.ground_truth)
    if doc.task_policies or doc.human_policies:
        policies = {}
        if doc.task_policies:
            policies["task"] = {k: list(v) for k, v in doc.task_policies.items()}
        if doc.human_policies:
            policies["human"] = {k: list(v) for k, v in doc.human_policies.items()}
        payload["policies"] = policies
    try:
        text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    except ValueError as exc:
        raise SerializationError(f"document contains non-finite numbers: {exc}") from None
    return (text + "\n").encode("utf-8")


def save_spec(doc: SpecDocument, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(doc))


def _game_payload(game: GameSpec) -> dict:
    payload = {
        "states": list(game.state_labels) if game.state_labels is not None else game.num_states,
        "ai_actions": list(game.ai_actions),
        "human_actions": list(game.human_actions),
        "observations": list(game.observations),
        "transition": game.transitions.tolist(),
        "observation_probs": game.observation_probs.tolist(),
        "margin": game.margins.tolist(),
        "action_bound": [list(row) for row in game.action_bound],
    }
    if game.scenario is not None:
        payload["scenario"] = game.scenario
    if game.annotations is not None:
        payload["annotations"] = [list(row) for row in game.annotations]
    return payload


def _ground_truth_payload(gt: GroundTruthSystem) -> dict:
    return {
        "world_states": gt.num_world_states,
        "human_states": gt.num_human_states,
        "human_observations": gt.num_human_observations,
        "world_dynamics": gt.world_transitions.tolist(),
        "human_dynamics": gt.human_transitions.tolist(),
        "human_observation": gt.human_observation.tolist(),
        "ai_observation": gt.ai_observation.tolist(),
        "privileged_failure": gt.failure.tolist(),
        "projection": gt.projection.tolist(),
    }
