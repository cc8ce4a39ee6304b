"""Exploration and question-answering policies.

Every policy is available as a plain step function (``oracle_step``,
``random_step``, ...) and wrapped by a small agent class that the harness
drives through ``act`` and ``answer``.
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .backend import BackendError, ChatBackend, ChatMessage, Completion
from .dsl import extract_hypotheses, render_hypotheses
from .env import Action, InvalidObjectError, ParseFailure, parse_command
from .hypotheses import (Belief, Hypothesis, ObservationPair, candidate_next_states,
                         expected_info_gain, predict)
from .prompts import (PromptStyle, SystemMessage, action_prompt, instantiate_prompt,
                      load_template, qa_prompt, system_message)

logger = logging.getLogger(__name__)


@dataclass
class AgentDecision:
    action: Action
    rationale_text: str | None = None
    replies: list[Completion] = field(default_factory=list)
    parse_failures: int = 0


@dataclass
class Answer:
    value: bool | None
    raw: str | None = None
    replies: list[Completion] = field(default_factory=list)


@dataclass
class View:
    """What an agent may look at when choosing its next move."""

    num_objects: int
    placement: tuple[bool, ...]
    belief: Belief
    observations: list[ObservationPair]
    transcript: str
    labels: tuple[str, ...] | None = None
    horizon: int = 32


def toggle(placement, obj: int) -> Action:
    return Action.take(obj) if placement[obj] else Action.put(obj)


# ---------------------------------------------------------------- oracle

_TIE = 1e-12


def oracle_step(belief: Belief, placement) -> AgentDecision:
    """Move to the neighbouring placement with the largest expected info gain.

    Ties go to the lowest object index. Once the support is resolved (all
    members compute the same function) the oracle exits.
    """
    if belief.is_resolved():
        return AgentDecision(Action.exit())
    gains = [expected_info_gain(belief, c) for c in candidate_next_states(placement)]
    best = max(gains)
    if best > _TIE:
        # symmetric splits can differ in the last bit; treat those as ties
        first = next(i for i, g in enumerate(gains) if g >= best - _TIE)
        return AgentDecision(toggle(placement, first))
    # every neighbour is uninformative yet distinct functions remain
    return AgentDecision(toggle(placement, _toward_disagreement(belief, placement)))


def _toward_disagreement(belief: Belief, placement) -> int:
    n = len(placement)
    for radius in range(2, n + 1):
        for flips in itertools.combinations(range(n), radius):
            x = list(placement)
            for i in flips:
                x[i] = not x[i]
            k0, k1 = belief.split(x)
            if k0 and k1:
                return flips[0]
    raise RuntimeError("support is unresolved but no placement separates it")


def oracle_answer(belief: Belief, obj: int) -> bool:
    return all(h.mask[obj] for h in belief.members())


# ---------------------------------------------------------------- baselines

def random_step(rng: np.random.Generator, placement) -> AgentDecision:
    """Uniform object, uniform direction; never exits."""
    obj = int(rng.integers(len(placement)))
    if rng.random() < 0.5:
        return AgentDecision(Action.put(obj))
    return AgentDecision(Action.take(obj))


@dataclass(frozen=True)
class PerturbationCounts:
    counts: tuple[int, ...]

    @classmethod
    def zeros(cls, n: int) -> "PerturbationCounts":
        return cls((0,) * n)

    def bump(self, obj: int) -> "PerturbationCounts":
        c = list(self.counts)
        c[obj] += 1
        return PerturbationCounts(tuple(c))

    def weights(self) -> np.ndarray:
        w = 1.0 / (1.0 + np.asarray(self.counts, dtype=float))
        return w / w.sum()


def count_based_step(counts: PerturbationCounts, placement, rng: np.random.Generator,
                     deterministic: bool = False) -> tuple[AgentDecision, PerturbationCounts]:
    """Toggle an object picked with weight 1/(1 + times it was moved)."""
    if deterministic:
        obj = int(np.argmin(counts.counts))
    else:
        obj = int(rng.choice(len(counts.counts), p=counts.weights()))
    return AgentDecision(toggle(placement, obj)), counts.bump(obj)


# ---------------------------------------------------------------- chat agents

_ANSWER = re.compile(r">\s*\**\s*(true|false)\b", re.IGNORECASE)


def parse_answer(text: str) -> bool | None:
    found = _ANSWER.findall(text or "")
    if not found:
        return None
    return found[-1].lower() == "true"


@dataclass(frozen=True)
class PromptSet:
    system: SystemMessage = SystemMessage.HUMAN_DEFAULT
    style: PromptStyle = PromptStyle.DEFAULT
    horizon: int = 32

    def system_text(self) -> str:
        return system_message(self.system, self.horizon)


def _ask_for_action(messages: list[ChatMessage], backend: ChatBackend, num_objects: int,
                    labels, retries: int) -> AgentDecision:
    replies = []
    for _ in range(retries + 1):
        out = backend.complete(messages)
        replies.append(out)
        try:
            action = parse_command(out.text, num_objects, labels)
        except InvalidObjectError as exc:
            # the environment renders the error and charges a step
            return AgentDecision(exc.action, out.text, replies, len(replies) - 1)
        except ParseFailure:
            continue
        return AgentDecision(action, out.text, replies, len(replies) - 1)
    logger.warning("no parseable command after %d attempts, falling back to look", retries + 1)
    return AgentDecision(Action.look(), replies[-1].text, replies, len(replies))


def chat_agent_step(transcript: str, templates: PromptSet, backend: ChatBackend,
                    num_objects: int, labels=None, retries: int = 2) -> AgentDecision:
    messages = [ChatMessage("system", templates.system_text()),
                ChatMessage("user", action_prompt(transcript, templates.style))]
    return _ask_for_action(messages, backend, num_objects, labels, retries)


def ask_true_false(messages: list[ChatMessage], backend: ChatBackend, retries: int = 1) -> Answer:
    replies = []
    for _ in range(retries + 1):
        out = backend.complete(messages)
        replies.append(out)
        value = parse_answer(out.text)
        if value is not None:
            return Answer(value, out.text, replies)
    logger.warning("unparseable answer, counted as wrong: %r", replies[-1].text[:80])
    return Answer(None, replies[-1].text, replies)


def chat_answer(transcript: str, label: str, templates: PromptSet, backend: ChatBackend) -> Answer:
    messages = [ChatMessage("system", templates.system_text()),
                ChatMessage("user", qa_prompt(transcript, label, templates.style))]
    return ask_true_false(messages, backend)


# ---------------------------------------------------------------- hypothesis sampling

@dataclass(frozen=True)
class SamplingAgentState:
    active: tuple[Hypothesis, ...] = ()
    eliminated: tuple[Hypothesis, ...] = ()
    target_sample_count: int = 16
    # |active| after each accepted sample of the latest sampling round
    growth: tuple[int, ...] = ()
    generation_calls: int = 0
    # (function key, observation count) when the active set last became resolved
    probe: tuple | None = None

    def q_entropy(self) -> float:
        """Entropy in bits of the uniform belief over the active set."""
        return math.log2(len(self.active)) if self.active else 0.0


def consistent_with(h: Hypothesis, observations) -> bool:
    return all(predict(h, o.placement) == o.light_on for o in observations)


def sample_hypotheses(state: SamplingAgentState, context: str, backend: ChatBackend,
                      num_requested: int, num_objects: int, observations=(),
                      call_budget: int = 3, system: str | None = None) -> SamplingAgentState:
    """Grow the active set with new, distinct, data-consistent hypotheses."""
    active = list(state.active)
    eliminated = list(state.eliminated)
    growth = []
    calls = 0
    template = load_template("sampling_generate")
    while len(active) < state.target_sample_count and calls < call_budget:
        prompt = instantiate_prompt(template, {
            "HISTORICAL OBSERVATIONS": context,
            "NUM_OBJECTS": num_objects,
            "NUM_HYPOTHESES": num_requested,
            "ELIMINATED HYPOTHESES": render_hypotheses(eliminated),
            "ACTIVE HYPOTHESES": render_hypotheses(active),
        })
        messages = ([ChatMessage("system", system)] if system else []) + [ChatMessage("user", prompt)]
        reply = backend.complete(messages)
        calls += 1
        for h in extract_hypotheses(reply.text, num_objects):
            if h in active or h in eliminated:
                continue
            if not consistent_with(h, observations):
                eliminated.append(h)
                continue
            active.append(h)
            growth.append(len(active))
            if len(active) >= state.target_sample_count:
                break
    if len(active) < state.target_sample_count:
        logger.info("sampling budget spent with %d/%d active hypotheses",
                    len(active), state.target_sample_count)
    return replace(state, active=tuple(active), eliminated=tuple(eliminated),
                   growth=tuple(growth), generation_calls=state.generation_calls + calls)


def eliminate(state: SamplingAgentState, observations) -> SamplingAgentState:
    keep, gone = [], list(state.eliminated)
    for h in state.active:
        (keep if consistent_with(h, observations) else gone).append(h)
    return replace(state, active=tuple(keep), eliminated=tuple(gone))


def active_resolved(state: SamplingAgentState) -> bool:
    return bool(state.active) and len({h.function_key() for h in state.active}) == 1


def sampling_agent_step(state: SamplingAgentState, transcript: str, backend: ChatBackend,
                        num_objects: int, observations=(), labels=None,
                        templates: PromptSet = PromptSet(), num_requested: int | None = None,
                        call_budget: int = 3, retries: int = 2
                        ) -> tuple[AgentDecision, SamplingAgentState]:
    """Eliminate, refill an empty active set, then act or exit.

    A resolved active set ends the episode only after its function has
    survived ``num_objects`` further observations requested while it stood
    alone, enough moves to reach any placement. Otherwise a wrong but
    untested survivor would pass silently.
    """
    system = templates.system_text()
    state = eliminate(state, observations)
    if not state.active:
        state = sample_hypotheses(state, transcript, backend,
                                  num_requested or state.target_sample_count, num_objects,
                                  observations, call_budget, system)
    if active_resolved(state):
        key = state.active[0].function_key()
        if (state.probe and state.probe[0] == key
                and len(observations) - state.probe[1] >= num_objects):
            # the lone survivor withstood enough moves to reach any test placement
            return AgentDecision(Action.exit()), state
        if not state.probe or state.probe[0] != key:
            state = replace(state, probe=(key, len(observations)))
    prompt = instantiate_prompt(load_template("sampling_action"), {
        "ACTIVE HYPOTHESES": render_hypotheses(state.active),
        "OBSERVATIONS SO FAR": transcript,
    })
    messages = [ChatMessage("system", system), ChatMessage("user", prompt)]
    return _ask_for_action(messages, backend, num_objects, labels, retries), state


def sampling_answer(state: SamplingAgentState, transcript: str, label: str,
                    backend: ChatBackend, templates: PromptSet = PromptSet()) -> Answer:
    prompt = instantiate_prompt(load_template("sampling_qa"), {
        "HISTORICAL OBSERVATIONS": transcript,
        "ELIMINATED HYPOTHESES": render_hypotheses(state.eliminated),
        "ACTIVE HYPOTHESES": render_hypotheses(state.active),
        "QUESTION": f"Is object {label} a blicket?",
    })
    return ask_true_false([ChatMessage("system", templates.system_text()),
                           ChatMessage("user", prompt)], backend)


# ---------------------------------------------------------------- agent classes

class Agent:
    kind = "base"

    def act(self, view: View) -> AgentDecision:
        raise NotImplementedError

    def answer(self, view: View, obj: int) -> Answer:
        raise NotImplementedError


class OracleAgent(Agent):
    kind = "oracle"

    def act(self, view):
        return oracle_step(view.belief, view.placement)

    def answer(self, view, obj):
        return Answer(oracle_answer(view.belief, obj))


class RandomAgent(Agent):
    kind = "random"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, view):
        return random_step(self.rng, view.placement)

    def answer(self, view, obj):
        return Answer(bool(self.rng.random() < 0.5))


class CountBasedAgent(RandomAgent):
    kind = "count_based"

    def __init__(self, rng: np.random.Generator, num_objects: int, deterministic: bool = False):
        super().__init__(rng)
        self.counts = PerturbationCounts.zeros(num_objects)
        self.deterministic = deterministic

    def act(self, view):
        decision, self.counts = count_based_step(self.counts, view.placement, self.rng,
                                                 self.deterministic)
        return decision


class ReplayAgent(RandomAgent):
    """Replays recorded commands, exiting when they run out."""

    kind = "replay"

    def __init__(self, commands: list[str], rng: np.random.Generator,
                 backend: ChatBackend | None = None, templates: PromptSet = PromptSet()):
        super().__init__(rng)
        self.commands = list(commands)
        self.backend = backend
        self.templates = templates

    def act(self, view):
        if not self.commands:
            return AgentDecision(Action.exit())
        cmd = self.commands.pop(0)
        try:
            return AgentDecision(parse_command("> " + cmd, view.num_objects, view.labels))
        except InvalidObjectError as exc:
            return AgentDecision(exc.action)

    def answer(self, view, obj):
        if self.backend is None:
            return super().answer(view, obj)
        label = view.labels[obj] if view.labels else str(obj)
        return chat_answer(view.transcript, label, self.templates, self.backend)


class ChatAgent(Agent):
    kind = "chat"

    def __init__(self, backend: ChatBackend, templates: PromptSet = PromptSet(), retries: int = 2):
        self.backend = backend
        self.templates = templates
        self.retries = retries

    def act(self, view):
        return chat_agent_step(view.transcript, self.templates, self.backend,
                               view.num_objects, view.labels, self.retries)

    def answer(self, view, obj):
        label = view.labels[obj] if view.labels else str(obj)
        return chat_answer(view.transcript, label, self.templates, self.backend)


class SamplingAgent(ChatAgent):
    kind = "sampling"

    def __init__(self, backend: ChatBackend, templates: PromptSet = PromptSet(),
                 target_sample_count: int = 16, call_budget: int = 3, retries: int = 2):
        super().__init__(backend, templates, retries)
        self.state = SamplingAgentState(target_sample_count=target_sample_count)
        self.call_budget = call_budget
        self.rounds: list[tuple[int, ...]] = []

    def act(self, view):
        calls = self.state.generation_calls
        decision, self.state = sampling_agent_step(
            self.state, view.transcript, self.backend, view.num_objects, view.observations,
            view.labels, self.templates, call_budget=self.call_budget, retries=self.retries)
        if self.state.generation_calls != calls:
            self.rounds.append(self.state.growth)
        return decision

    def answer(self, view, obj):
        self.state = eliminate(self.state, view.observations)
        label = view.labels[obj] if view.labels else str(obj)
        return sampling_answer(self.state, view.transcript, label, self.backend, self.templates)


def answer_question(mode: str, question_object: int, *, view: View | None = None,
                    belief: Belief | None = None, rng: np.random.Generator | None = None,
                    backend: ChatBackend | None = None, templates: PromptSet = PromptSet(),
                    state: SamplingAgentState | None = None) -> bool | None:
    """One Q&A answer under the given policy; ``None`` means unparseable."""
    if mode == "oracle":
        return oracle_answer(belief if belief is not None else view.belief, question_object)
    if mode == "random":
        return bool(rng.random() < 0.5)
    label = view.labels[question_object] if view.labels else str(question_object)
    if mode == "chat":
        return chat_answer(view.transcript, label, templates, backend).value
    if mode == "sampling":
        return sampling_answer(state, view.transcript, label, backend, templates).value
    raise ValueError(f"unknown answer mode {mode!r}")


__all__ = [
    "AgentDecision", "Answer", "View", "oracle_step", "oracle_answer", "random_step",
    "PerturbationCounts", "count_based_step", "parse_answer", "PromptSet", "chat_agent_step",
    "chat_answer", "SamplingAgentState", "sample_hypotheses", "sampling_agent_step",
    "sampling_answer", "answer_question", "OracleAgent", "RandomAgent", "CountBasedAgent",
    "ReplayAgent", "ChatAgent", "SamplingAgent", "BackendError",
]
