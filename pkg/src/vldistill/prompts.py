"""Versioned prompt templates and rendering.

Templates ship as package resources. Only declared slots are filled;
any other {...} markers in a template are literal text the model is
expected to echo in its response format.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources


class PromptError(Exception):
    pass


class MissingSlot(PromptError):
    def __init__(self, slot: str):
        self.slot = slot
        super().__init__(f"missing slot {slot!r}")


class UnexpectedSlot(PromptError):
    def __init__(self, slot: str):
        self.slot = slot
        super().__init__(f"unexpected slot {slot!r}")


@dataclass(frozen=True)
class PromptTemplate:
    prompt_id: str
    text: str
    slots: tuple

    def render(self, **values: str) -> str:
        for name in values:
            if name not in self.slots:
                raise UnexpectedSlot(name)
        out = self.text
        for slot in self.slots:
            if slot not in values or not values[slot]:
                raise MissingSlot(slot)
            out = out.replace("{%s}" % slot, values[slot])
        return out


_SLOTS = {
    "laion-v1": (),
    "vflan-v1": ("question",),
    "vflan-direct-v1": ("question",),
}


def load_template(prompt_id: str) -> PromptTemplate:
    if prompt_id not in _SLOTS:
        raise PromptError(f"unknown template {prompt_id!r}")
    text = (
        resources.files("vldistill.templates")
        .joinpath(f"{prompt_id}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(prompt_id, text, _SLOTS[prompt_id])


def build_prompt(kind: str, question: str | None = None) -> str:
    """Render the distillation prompt for a source kind.

    laion takes no question (the model generates candidates itself);
    vflan splices the original question into the fenced block.
    """
    if kind == "laion":
        if question is not None:
            raise UnexpectedSlot("question")
        return load_template("laion-v1").render()
    if kind == "vflan":
        if not question:
            raise MissingSlot("question")
        return load_template("vflan-v1").render(question=question)
    raise ValueError(f"unknown kind {kind!r}")


def prompt_id_for(kind: str) -> str:
    return {"laion": "laion-v1", "vflan": "vflan-v1"}[kind]


def ablation_prompt(mode: str, question: str) -> str:
    """Prompt for the answer-quality ablation.

    caption_then_answer is the standard vflan prompt; direct_answer drops
    the description task entirely and keeps only the answer block.
    """
    if not question:
        raise MissingSlot("question")
    if mode == "caption_then_answer":
        return load_template("vflan-v1").render(question=question)
    if mode == "direct_answer":
        return load_template("vflan-direct-v1").render(question=question)
    raise ValueError(f"unknown ablation mode {mode!r}")


def ablation_prompt_id(mode: str) -> str:
    return {"caption_then_answer": "vflan-v1", "direct_answer": "vflan-direct-v1"}[mode]
