"""Weighted concept prompts: parsing, interpolation sweeps, guidance building.

Prompt syntax: terms joined by the literal token ``AND``, each term
``[weight*]<name>`` with a default weight of 1.0, e.g.::

    0.25*<healthy> AND 0.75*<cardiomegaly>

Weights are passed through verbatim (no renormalization).  Zero-weight
terms are dropped before any denoiser call, which makes interpolation
endpoints identical to single-concept prompts.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .conditioning import TextConditioner
from .guidance import GuidanceSpec
from .inversion import EmbeddingRegistry

_TERM_RE = re.compile(r"^(?:(?P<weight>[^*<>\s]+)\*)?(?P<name><[^<>\s*]+>)$")

# Prompts combining three or more concepts default to a stronger guidance
# scale; single flags can still override it.
MULTI_TERM_CFG_SCALE = 3.0
MULTI_TERM_THRESHOLD = 3


@dataclass(frozen=True)
class ComposedPrompt:
    """Ordered (concept name, weight) terms with an optional cfg override."""

    terms: tuple[tuple[str, float], ...]
    cfg_scale: float | None = None

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ValueError("a composed prompt needs at least one term")
        object.__setattr__(self, "terms", tuple((n, float(w)) for n, w in self.terms))


def parse_prompt(text: str, registry: EmbeddingRegistry | None = None) -> ComposedPrompt:
    """Parse weighted AND syntax; names are resolved against the registry."""
    if not text or not text.strip():
        raise ValueError("empty prompt")
    terms = []
    for raw in re.split(r"\bAND\b", text):
        part = raw.strip()
        if not part:
            raise ValueError(f"empty term in prompt {text!r}")
        m = _TERM_RE.match(part)
        if m is None:
            raise ValueError(
                f"malformed term {part!r}; expected '[weight*]<name>'"
            )
        weight = 1.0
        if m.group("weight") is not None:
            try:
                weight = float(m.group("weight"))
            except ValueError:
                raise ValueError(f"malformed weight in term {part!r}") from None
        name = m.group("name")
        if registry is not None:
            registry.resolve(name)
        terms.append((name, weight))
    return ComposedPrompt(terms=tuple(terms))


def format_prompt(prompt: ComposedPrompt) -> str:
    """Inverse of :func:`parse_prompt`; round-trips terms and weights exactly."""
    parts = []
    for name, weight in prompt.terms:
        parts.append(name if weight == 1.0 else f"{weight!r}*{name}")
    return " AND ".join(parts)


def interpolation_sweep(healthy: str, diseased: str, alphas) -> list[ComposedPrompt]:
    """Prompts [(healthy, 1-a), (diseased, a)] for each blend factor a."""
    prompts = []
    for alpha in alphas:
        a = float(alpha)
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"interpolation factor must be in [0, 1], got {a}")
        prompts.append(ComposedPrompt(terms=((healthy, 1.0 - a), (diseased, a))))
    return prompts


def build_guidance(
    prompt: ComposedPrompt,
    registry: EmbeddingRegistry,
    conditioner: TextConditioner,
    default_cfg_scale: float = 2.0,
) -> GuidanceSpec:
    """Encode each term's concept and assemble the guidance spec.

    The cfg scale is, in order of precedence: the prompt's own override, the
    multi-concept default when the prompt has >= 3 terms, else
    ``default_cfg_scale``.
    """
    terms = tuple(
        (conditioner.encode([registry.resolve(name)]), weight)
        for name, weight in prompt.terms
    )
    if prompt.cfg_scale is not None:
        cfg = prompt.cfg_scale
    elif len(prompt.terms) >= MULTI_TERM_THRESHOLD:
        cfg = MULTI_TERM_CFG_SCALE
    else:
        cfg = default_cfg_scale
    return GuidanceSpec(terms=terms, cfg_scale=cfg, unconditional=conditioner.unconditional())
