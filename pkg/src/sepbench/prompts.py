"""Operator-bearing text prompts built from captions and a template library."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import AssetValidationError, InvalidOperatorError, MissingCaptionError, SepbenchError

OPERATORS = ("extract", "remove")
PLACEHOLDER = "{captions}"
TEMPLATES_PER_OPERATOR = 50


@dataclass(frozen=True)
class OperatorTemplate:
    id: int
    operator: str
    pattern: str

    def render(self, captions_text: str) -> str:
        return self.pattern.replace(PLACEHOLDER, captions_text)


@dataclass(frozen=True)
class PromptSpec:
    operator: str
    captions: tuple[str, ...]
    template_id: int
    text: str


class TemplateLibrary:
    """Immutable, validated set of extraction and removal templates."""

    def __init__(self, templates: Sequence[OperatorTemplate], per_operator: int = TEMPLATES_PER_OPERATOR):
        by_id = {}
        for t in templates:
            if t.id in by_id:
                raise AssetValidationError(f"duplicate template id {t.id}")
            if t.operator not in OPERATORS:
                raise AssetValidationError(f"template {t.id}: unknown operator {t.operator!r}")
            if t.pattern.count(PLACEHOLDER) != 1:
                raise AssetValidationError(f"template {t.id}: needs exactly one {PLACEHOLDER} placeholder")
            by_id[t.id] = t
        self._by_id = by_id
        self._by_op = {op: tuple(sorted((t for t in templates if t.operator == op), key=lambda t: t.id))
                       for op in OPERATORS}
        for op, group in self._by_op.items():
            if len(group) != per_operator:
                raise AssetValidationError(f"expected {per_operator} {op} templates, found {len(group)}")

    def __len__(self):
        return len(self._by_id)

    def __getitem__(self, template_id: int) -> OperatorTemplate:
        return self._by_id[template_id]

    def __contains__(self, template_id) -> bool:
        return template_id in self._by_id

    def for_operator(self, operator: str) -> tuple[OperatorTemplate, ...]:
        if operator not in OPERATORS:
            raise InvalidOperatorError(f"unknown operator {operator!r}")
        return self._by_op[operator]


def load_templates(path=None) -> TemplateLibrary:
    """Load a tab-separated ``id, operator, pattern`` asset (bundled one by default)."""
    if path is None:
        text = resources.files("sepbench").joinpath("data/templates.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.DictReader(text.splitlines(), delimiter="\t", quoting=csv.QUOTE_NONE))
    templates = []
    for i, row in enumerate(rows):
        try:
            templates.append(OperatorTemplate(int(row["id"]), row["operator"].strip(), row["pattern"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise AssetValidationError(f"malformed template row {i + 1}: {row!r}") from exc
    return TemplateLibrary(templates)


_DEFAULT_LIBRARY = None


def default_library() -> TemplateLibrary:
    global _DEFAULT_LIBRARY
    if _DEFAULT_LIBRARY is None:
        _DEFAULT_LIBRARY = load_templates()
    return _DEFAULT_LIBRARY


def join_captions(captions: Sequence[str]) -> str:
    """Join captions as ``A``, ``A and B`` or ``A, B, and C``."""
    captions = list(captions)
    if not captions:
        raise SepbenchError("need at least one caption")
    if len(captions) == 1:
        return captions[0]
    if len(captions) == 2:
        return f"{captions[0]} and {captions[1]}"
    return ", ".join(captions[:-1]) + ", and " + captions[-1]


def compose_prompt(operator: str, captions: Sequence[str], rng: np.random.Generator | None = None,
                   template_id: int | None = None, library: TemplateLibrary | None = None) -> PromptSpec:
    """Realise a prompt for ``operator`` targeting ``captions``.

    Either force ``template_id`` or pass ``rng`` for a uniform draw among the
    operator's templates.
    """
    library = library or default_library()
    group = library.for_operator(operator)
    if template_id is not None:
        if template_id not in library:
            raise InvalidOperatorError(f"no template with id {template_id}")
        template = library[template_id]
        if template.operator != operator:
            raise InvalidOperatorError(
                f"template {template_id} is a {template.operator} template, not {operator}")
    else:
        if rng is None:
            raise SepbenchError("either rng or template_id is required")
        template = group[int(rng.integers(len(group)))]
    captions = tuple(captions)
    return PromptSpec(operator, captions, template.id, template.render(join_captions(captions)))


def caption_variants(captions: Mapping[str, Sequence[str]], rng: np.random.Generator) -> dict[str, str]:
    """Pick one caption per clip, uniformly among that clip's captions."""
    chosen = {}
    for clip_id in sorted(captions):
        options = list(captions[clip_id])
        if not options:
            raise MissingCaptionError(f"clip {clip_id!r} has no captions")
        chosen[clip_id] = options[int(rng.integers(len(options)))]
    return chosen
