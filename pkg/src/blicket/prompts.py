"""Prompt templates shipped as data files, pinned by content hash."""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .env import BlicketError


class TemplateError(BlicketError, KeyError):
    pass


# sha256 of each shipped template; a mismatch means the text drifted
TEMPLATE_SHA256 = {
    "system_frame": "3a244e323d78636b64f644b9a2064e548243f6c4a9df45e016ae4192c5fff8cb",
    "human_default_initial": "72cc85ed11e7fcbc2c928b921df0546d255f643e651d2dab8274b38cf89df891",
    "human_default_tips": "459e5bebcb014a1c05108dc2008d9aab91a05bef23c33ae16dc29af5b90aa533",
    "human_conjunctive_initial": "20a68e4088a70a8986beea1676347b9ce992ea651bb1982cb4efcc02bf0eb746",
    "human_conjunctive_tips": "459e5bebcb014a1c05108dc2008d9aab91a05bef23c33ae16dc29af5b90aa533",
    "math_definition_initial": "20a68e4088a70a8986beea1676347b9ce992ea651bb1982cb4efcc02bf0eb746",
    "math_definition_tips": "ddefa25e5959da8e86cb34859526d0d86a47370eb06a4834723f84e4c93f08e1",
    "style_default": "aed61ee24d3ae14ca57119f47fcca3547cb3e798797ce8b81ca14417649dc0b5",
    "style_react": "c4c3cc809729291d5557bab2960827a09a67c1145336baf8d3e078feabd56d82",
    "style_reflexion": "5b533121abdae3963123b56cbcc00b4d642624436abdbb377f1a7f00831ba46e",
    "style_cot": "cd2cb16288ac93619c4f7cdc8bb88900c698ee0790b450d04d820ee1a1edbd67",
    "sampling_generate": "76ceb7df54c26cf8f195fd6381081df1f79b39a76ec560b8ad6cd43661199274",
    "sampling_action": "4b449ddd59120eef0c65473e70c3973e3b2c4b8ca3003efc25bc771a652ce90f",
    "sampling_qa": "3333e324b5becad57486d46b1ced85bc9c23e34fbcf35b4febce5b08146f0b92",
}

KNOWN_PLACEHOLDERS = frozenset({
    "HORIZON", "NUM_OBJECTS", "NUM_HYPOTHESES", "INITIAL MESSAGE", "TIPS",
    "HISTORICAL OBSERVATIONS", "OBSERVATIONS SO FAR", "ELIMINATED HYPOTHESES",
    "ACTIVE HYPOTHESES", "QUESTION",
})

# "[## TIPS ##]", "#HORIZON#", "[ACTIVE HYPOTHESES]"
_PLACEHOLDER = re.compile(r"\[## ([A-Z][A-Z ]*?) ##\]|#([A-Z_]+)#|\[([A-Z][A-Z ]*[A-Z])\]")


class SystemMessage(str, enum.Enum):
    HUMAN_DEFAULT = "human_default"
    HUMAN_CONJUNCTIVE = "human_conjunctive"
    MATH_DEFINITION = "math_definition"


class PromptStyle(str, enum.Enum):
    DEFAULT = "default"
    REACT = "react"
    REFLEXION = "reflexion"
    COT = "cot"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def placeholders(self) -> set[str]:
        return {next(g for g in m.groups() if g) for m in _PLACEHOLDER.finditer(self.body)}

    def check(self) -> None:
        unknown = self.placeholders - KNOWN_PLACEHOLDERS
        if unknown:
            raise TemplateError(f"template {self.name} has unknown placeholders {sorted(unknown)}")


def instantiate_prompt(template: PromptTemplate, bindings: dict[str, object]) -> str:
    missing = sorted(template.placeholders - set(bindings))
    if missing:
        raise TemplateError(f"template {template.name} missing bindings: {', '.join(missing)}")

    def sub(m: re.Match) -> str:
        return str(bindings[next(g for g in m.groups() if g)])

    return _PLACEHOLDER.sub(sub, template.body)


def template_text(name: str) -> str:
    return resources.files("blicket.templates").joinpath(f"{name}.txt").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_template(name: str) -> PromptTemplate:
    body = template_text(name)
    expected = TEMPLATE_SHA256.get(name)
    if expected is not None and hashlib.sha256(body.encode("utf-8")).hexdigest() != expected:
        raise TemplateError(f"template {name} does not match its pinned hash")
    tpl = PromptTemplate(name, body)
    tpl.check()
    return tpl


def system_message(variant: SystemMessage | str, horizon: int) -> str:
    variant = SystemMessage(variant)
    return instantiate_prompt(load_template("system_frame"), {
        "INITIAL MESSAGE": load_template(f"{variant.value}_initial").body,
        "TIPS": load_template(f"{variant.value}_tips").body,
        "HORIZON": horizon,
    })


def action_instruction(style: PromptStyle | str) -> str:
    return load_template(f"style_{PromptStyle(style).value}").body


def qa_instruction(style: PromptStyle | str) -> str:
    """The action instruction re-targeted at a True/False answer."""
    text = action_instruction(style)
    return text.replace("'> command'", "'> True/False'").replace("command", "answer")


def qa_question(label: str) -> str:
    return ("Based on the information you have gathered, answer the following question: "
            f"Is object {label} a blicket?")


def qa_prompt(transcript: str, label: str, style: PromptStyle | str = PromptStyle.DEFAULT) -> str:
    return f"{transcript}\n\n{qa_question(label)}\n\n{qa_instruction(style)}"


def action_prompt(transcript: str, style: PromptStyle | str = PromptStyle.DEFAULT) -> str:
    return f"{transcript}\n\n{action_instruction(style)}"
