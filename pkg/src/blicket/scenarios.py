"""Scripted inference scenarios comparing model answers with human data.

A training trial hints at a disjunctive, conjunctive or ambiguous machine;
a shared test trial with new objects A, B, C is ambiguous by design. Calling
object A a blicket means the machine is read as conjunctive.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from .agents import PromptSet, ask_true_false
from .backend import ChatBackend, ChatMessage
from .env import (Action, Episode, OpeningVariant, RenderStyle, Rule, letter_labels,
                  make_state)

logger = logging.getLogger(__name__)


class ScenarioKind(str, enum.Enum):
    DISJUNCTIVE_EVIDENCE = "disjunctive_evidence"
    CONJUNCTIVE_EVIDENCE = "conjunctive_evidence"
    AMBIGUOUS_EVIDENCE = "ambiguous_evidence"


@dataclass(frozen=True)
class _Script:
    blickets: tuple[int, ...]
    rule: Rule
    moves: tuple[tuple[str, int], ...]
    # blank line between the opening and the first command
    separator: str = "\n\n"


def _moves(spec: str) -> tuple[tuple[str, int], ...]:
    """``"+0 -0 +1"`` -> put 0, take 0, put 1."""
    return tuple(("put" if tok[0] == "+" else "take", int(tok[1:])) for tok in spec.split())


TRAINING_SCRIPTS = {
    ScenarioKind.DISJUNCTIVE_EVIDENCE: _Script(
        (0, 2), Rule.DISJUNCTIVE, _moves("+0 -0 +1 -1 +2 -2 +0 +1 -1 +2 -0 +1"), separator="\n"),
    ScenarioKind.CONJUNCTIVE_EVIDENCE: _Script(
        (0, 2), Rule.CONJUNCTIVE, _moves("+0 -0 +1 -1 +2 -2 +0 +1 -1 +2 -0 +1")),
    ScenarioKind.AMBIGUOUS_EVIDENCE: _Script(
        (0, 2), Rule.CONJUNCTIVE, _moves("+0 -0 +0 -0 +1 -1 +1 -1 +1 -1 +0 +2")),
}

# A and C are blickets under AND, or only C under OR: both fit the data
TEST_SCRIPT = _Script((0, 2), Rule.CONJUNCTIVE, _moves("+0 -0 +0 -0 +0 -0 +1 -1 +0 +2 +1 -1"))

QUESTION = ("Based on the information above, is object A a blicket?\n\n"
            "Directly output the answer in the format '> True/False'. "
            "Ensure only one answer is included.")


def _play(script: _Script, opening: OpeningVariant, labels=None) -> str:
    n = 3
    mask = [i in script.blickets for i in range(n)]
    state = make_state(mask, script.rule, [False] * n, horizon=len(script.moves),
                       labels=labels, render_style=RenderStyle.OFF_THE)
    ep = Episode(state, opening)
    for verb, obj in script.moves:
        ep.step(Action.put(obj) if verb == "put" else Action.take(obj))
    return ep.transcript(script.separator)


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    training_transcript: str
    test_transcript: str
    question: str
    key_object_label: str = "A"

    def prompt(self) -> str:
        return f"{self.training_transcript}\n\n{self.test_transcript}\n\n{self.question}"


def build_scenario(kind: ScenarioKind | str) -> Scenario:
    kind = ScenarioKind(kind)
    training = _play(TRAINING_SCRIPTS[kind], OpeningVariant.SCENARIO_TRAINING)
    test = _play(TEST_SCRIPT, OpeningVariant.SCENARIO_TEST, letter_labels(3))
    return Scenario(kind, training, test, QUESTION, "A")


@dataclass
class BatteryResult:
    kind: ScenarioKind
    proportion: float
    answers: list[bool | None] = field(default_factory=list)
    raw: list[str | None] = field(default_factory=list)
    complete: bool = True

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "proportion": self.proportion, "answers": self.answers,
                "raw": self.raw, "complete": self.complete}


def run_scenario_battery(backend: ChatBackend, kind: ScenarioKind | str, repetitions: int,
                         templates: PromptSet | None = PromptSet()) -> BatteryResult:
    """Fraction of repetitions answering True for object A."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    scenario = build_scenario(kind)
    messages = [ChatMessage("user", scenario.prompt())]
    if templates is not None:
        messages.insert(0, ChatMessage("system", templates.system_text()))
    result = BatteryResult(scenario.kind, 0.0)
    for _ in range(repetitions):
        ans = ask_true_false(messages, backend)
        result.answers.append(ans.value)
        result.raw.append(ans.raw)
        result.proportion = sum(a is True for a in result.answers) / len(result.answers)
    return result
