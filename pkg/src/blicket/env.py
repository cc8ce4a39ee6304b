"""Deterministic text Blicket environment.

The state machine is immutable: ``apply_action`` returns a new ``EnvState``
together with the ``Event`` describing what the agent saw. All rendering is
byte-stable so a recorded action sequence replays to the same transcript.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

import numpy as np

MAX_OBJECTS = 24


class BlicketError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(BlicketError, ValueError):
    pass


class EpisodeClosedError(BlicketError):
    pass


class ParseFailure(BlicketError, ValueError):
    """The agent's reply does not contain a recognisable command."""


class InvalidObjectError(ParseFailure):
    """A command names an object that does not exist.

    The parsed action is kept on ``action`` so the harness can still feed it
    to the environment (which renders an error line and consumes a step).
    """

    def __init__(self, message: str, action: "Action"):
        super().__init__(message)
        self.action = action


class Rule(str, enum.Enum):
    DISJUNCTIVE = "disjunctive"
    CONJUNCTIVE = "conjunctive"

    @classmethod
    def parse(cls, text: str) -> "Rule":
        key = text.strip().lower()
        aliases = {"disj": cls.DISJUNCTIVE, "or": cls.DISJUNCTIVE, "any": cls.DISJUNCTIVE,
                   "conj": cls.CONJUNCTIVE, "and": cls.CONJUNCTIVE, "all": cls.CONJUNCTIVE}
        if key in aliases:
            return aliases[key]
        return cls(key)


class RenderStyle(str, enum.Enum):
    # "You took object 0 off the machine."
    OFF_THE = "off_the"
    # "You took object 0 off of the machine."
    OFF_OF_THE = "off_of_the"


class OpeningVariant(str, enum.Enum):
    DEFAULT = "default"
    SCENARIO_TRAINING = "scenario_training"
    SCENARIO_TEST = "scenario_test"


class ActionKind(str, enum.Enum):
    PUT = "put"
    TAKE = "take"
    LOOK = "look"
    EXIT = "exit"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    obj: int | None = None
    # PUT only: "machine" or "floor"; putting on the floor is a removal
    target: str = "machine"

    @classmethod
    def put(cls, obj: int, target: str = "machine") -> "Action":
        return cls(ActionKind.PUT, obj, target)

    @classmethod
    def take(cls, obj: int) -> "Action":
        return cls(ActionKind.TAKE, obj)

    @classmethod
    def look(cls) -> "Action":
        return cls(ActionKind.LOOK)

    @classmethod
    def exit(cls) -> "Action":
        return cls(ActionKind.EXIT)

    @property
    def moves_object(self) -> bool:
        return self.kind in (ActionKind.PUT, ActionKind.TAKE)

    @property
    def places_on_machine(self) -> bool:
        return self.kind is ActionKind.PUT and self.target == "machine"

    def command(self, labels: tuple[str, ...] | None = None) -> str:
        """Command text as it appears after ``> `` in a transcript."""
        if self.kind is ActionKind.LOOK:
            return "look"
        if self.kind is ActionKind.EXIT:
            return "exit"
        label = _label(self.obj, labels)
        if self.kind is ActionKind.PUT:
            return f"put object {label} on {self.target}"
        return f"take object {label} off machine"

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.obj is not None:
            d["obj"] = self.obj
        if self.kind is ActionKind.PUT:
            d["target"] = self.target
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        return cls(ActionKind(d["kind"]), d.get("obj"), d.get("target", "machine"))


def _label(obj: int | None, labels: tuple[str, ...] | None) -> str:
    if labels is not None and obj is not None and 0 <= obj < len(labels):
        return labels[obj]
    return str(obj)


def letter_labels(n: int) -> tuple[str, ...]:
    return tuple(chr(ord("A") + i) for i in range(n))


def machine_output(rule: Rule, mask, placement) -> bool:
    """Light state for a blicket mask under ``rule`` given object placements."""
    if len(mask) != len(placement):
        raise ValueError(f"mask has {len(mask)} entries, placement has {len(placement)}")
    present = [bool(p) for m, p in zip(mask, placement) if m]
    if rule is Rule.DISJUNCTIVE:
        return any(present)
    return all(present)


@dataclass(frozen=True)
class Event:
    action: Action
    resulting_light: bool
    rendered_text: str
    placement: tuple[bool, ...]
    valid: bool = True

    def transcript_lines(self, labels: tuple[str, ...] | None = None) -> str:
        return f"> {self.action.command(labels)}\n{self.rendered_text}"


@dataclass(frozen=True)
class EnvState:
    blicket_mask: tuple[bool, ...]
    rule: Rule
    placement: tuple[bool, ...]
    light_on: bool
    step: int = 0
    horizon: int = 32
    terminated: bool = False
    exited: bool = False
    labels: tuple[str, ...] | None = None
    render_style: RenderStyle = RenderStyle.OFF_THE

    @property
    def num_objects(self) -> int:
        return len(self.placement)

    @property
    def done(self) -> bool:
        return self.terminated or self.step >= self.horizon

    def label(self, obj: int) -> str:
        return _label(obj, self.labels)


def make_state(mask, rule: Rule, placement, horizon: int = 32,
               labels: tuple[str, ...] | None = None,
               render_style: RenderStyle = RenderStyle.OFF_THE) -> EnvState:
    mask = tuple(bool(m) for m in mask)
    placement = tuple(bool(p) for p in placement)
    if not 1 <= len(mask) <= MAX_OBJECTS:
        raise InvalidConfigError(f"object count must be in 1..{MAX_OBJECTS}, got {len(mask)}")
    if len(mask) != len(placement):
        raise InvalidConfigError("mask and placement lengths differ")
    if horizon < 1:
        raise InvalidConfigError("horizon must be >= 1")
    return EnvState(mask, rule, placement, machine_output(rule, mask, placement),
                    horizon=horizon, labels=labels, render_style=render_style)


def init_env(num_objects: int, num_blickets: int, rule: Rule, horizon: int = 32,
             rng_seed: int | np.random.Generator = 0, p_on_machine: float = 0.1,
             render_style: RenderStyle = RenderStyle.OFF_THE) -> EnvState:
    """Sample a fresh episode.

    Blickets are a uniform random subset of size ``num_blickets``; each object
    starts on the machine independently with probability ``p_on_machine``.
    """
    if not 1 <= num_objects <= MAX_OBJECTS:
        raise InvalidConfigError(f"object count must be in 1..{MAX_OBJECTS}, got {num_objects}")
    if not 0 <= num_blickets <= num_objects:
        raise InvalidConfigError(f"cannot pick {num_blickets} blickets from {num_objects} objects")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    chosen = rng.choice(num_objects, size=num_blickets, replace=False)
    mask = np.zeros(num_objects, dtype=bool)
    mask[chosen] = True
    placement = rng.random(num_objects) < p_on_machine
    return make_state(mask.tolist(), rule, placement.tolist(), horizon=horizon,
                      render_style=render_style)


def _light_sentence(light_on: bool) -> str:
    if light_on:
        return "The light on the machine is now on."
    return "The light on the machine is currently off."


def _locations(placement, labels) -> str:
    parts = []
    for i, on in enumerate(placement):
        where = "on the machine" if on else "on the floor"
        parts.append(f"object {_label(i, labels)} is {where}")
    return ", ".join(parts)


def render_event(action: Action, light_on: bool, object_label: str | None = None,
                 style: RenderStyle = RenderStyle.OFF_THE, placement=None,
                 labels: tuple[str, ...] | None = None) -> str:
    if action.kind is ActionKind.EXIT:
        return "Exiting the episode."
    if action.kind is ActionKind.LOOK:
        # the room paragraph minus the framing sentences
        if placement is None:
            return _light_sentence(light_on)
        return f"You observe them: {_locations(placement, labels)}. {_light_sentence(light_on)}"
    label = object_label if object_label is not None else str(action.obj)
    if action.places_on_machine:
        head = f"You put object {label} on the machine."
    elif action.kind is ActionKind.PUT:
        head = f"You put object {label} on the floor."
    elif style is RenderStyle.OFF_OF_THE:
        head = f"You took object {label} off of the machine."
    else:
        head = f"You took object {label} off the machine."
    return f"{head} {_light_sentence(light_on)}"


INVALID_OBJECT_TEXT = "You don't see that object."


def render_initial_observation(state: EnvState,
                               variant: OpeningVariant = OpeningVariant.DEFAULT) -> str:
    n = state.num_objects
    noun = "object" if n == 1 else "objects"
    locs = _locations(state.placement, state.labels)
    light = ("The light on the machine is currently on." if state.light_on
             else "The light on the machine is currently off.")
    machine = (f"The machine hums softly in front of you, seemingly waiting. {light} "
               "You wonder if there is a relationship between the objects and the machine.")
    if variant is OpeningVariant.DEFAULT:
        return ("You are in a room. You see a machine at the center of this room. \n\n"
                f"There are also {n} {noun} scattered around the room. You observe them: {locs}. \n\n"
                f"{machine}")
    if variant is OpeningVariant.SCENARIO_TRAINING:
        return ("You are in a room. You see a machine at the center of this room.\n\n"
                f"There are also {n} {noun} scattered around the room. You observe them: {locs}. "
                f"{machine}")
    return ("You are in a new room. You see the same machine as the one you previously saw "
            "at the center of this room.\n\n"
            f"You now have {n} different {noun} scattered around the room. You observe them: {locs}. "
            f"{machine}")


def apply_action(state: EnvState, action: Action) -> tuple[EnvState, Event]:
    if state.done:
        raise EpisodeClosedError(f"episode closed at step {state.step}")
    step = state.step + 1
    if action.kind is ActionKind.EXIT:
        new = replace(state, step=step, terminated=True, exited=True)
        return new, Event(action, state.light_on, render_event(action, state.light_on),
                          state.placement)

    if action.moves_object and not (action.obj is not None and 0 <= action.obj < state.num_objects):
        new = replace(state, step=step, terminated=step >= state.horizon)
        return new, Event(action, state.light_on, INVALID_OBJECT_TEXT, state.placement, valid=False)

    placement = state.placement
    if action.moves_object:
        p = list(placement)
        p[action.obj] = action.places_on_machine
        placement = tuple(p)
    light = machine_output(state.rule, state.blicket_mask, placement)
    new = replace(state, placement=placement, light_on=light, step=step,
                  terminated=step >= state.horizon)
    label = state.label(action.obj) if action.obj is not None else None
    text = render_event(action, light, label, state.render_style, placement, state.labels)
    return new, Event(action, light, text, placement)


_CMD_PUT = re.compile(r"^put\s+(?:object\s+)?(\w+)\s+on\s+(?:the\s+)?(machine|floor)\b")
_CMD_TAKE = re.compile(r"^take\s+(?:object\s+)?(\w+)\s+off\s+(?:of\s+)?(?:the\s+)?machine\b")


def _object_index(token: str, labels: tuple[str, ...] | None) -> int | None:
    if token.isdigit():
        return int(token)
    if labels is not None:
        upper = token.upper()
        if upper in labels:
            return labels.index(upper)
    return None


def parse_command(text: str, num_objects: int, labels: tuple[str, ...] | None = None) -> Action:
    """Parse an agent reply into an ``Action``.

    The last line starting with ``>`` is used; if there is none, the whole
    reply is tried line by line from the end.
    """
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    marked = [ln for ln in lines if ln.startswith(">")]
    candidates = [marked[-1]] if marked else list(reversed(lines))
    for raw in candidates:
        cmd = raw.lstrip(">").strip().strip("`'\"*").strip().rstrip(".").lower()
        cmd = re.sub(r"\s+", " ", cmd)
        if cmd in ("look", "look around"):
            return Action.look()
        if cmd in ("exit", "quit"):
            return Action.exit()
        m = _CMD_PUT.match(cmd)
        if m:
            action = Action.put(-1, m.group(2))
            token = m.group(1)
        else:
            m = _CMD_TAKE.match(cmd)
            if not m:
                continue
            action = Action.take(-1)
            token = m.group(1)
        idx = _object_index(token, labels)
        if idx is None:
            raise InvalidObjectError(f"unknown object {token!r}", action)
        action = replace(action, obj=idx)
        if idx >= num_objects:
            raise InvalidObjectError(f"object {idx} out of range for {num_objects} objects", action)
        return action
    raise ParseFailure(f"no command found in {text[:80]!r}")


@dataclass
class Episode:
    """Mutable convenience wrapper: state plus the growing transcript."""

    state: EnvState
    opening: OpeningVariant = OpeningVariant.DEFAULT
    events: list[Event] = field(default_factory=list)

    def __post_init__(self):
        self.initial_state = self.state

    def step(self, action: Action) -> Event:
        self.state, event = apply_action(self.state, action)
        self.events.append(event)
        return event

    def transcript(self, separator: str = "\n\n") -> str:
        return build_transcript(self.initial_state, self.events, self.opening, separator)


def build_transcript(initial: EnvState, events, opening: OpeningVariant = OpeningVariant.DEFAULT,
                     separator: str = "\n\n") -> str:
    head = render_initial_observation(initial, opening)
    if not events:
        return head
    body = "\n".join(e.transcript_lines(initial.labels) for e in events)
    return head + separator + body
