"""Prompt templates shipped with the package.

Templates live in ``templates/*.txt`` and use ``string.Template`` ``$name``
placeholders (JSON braces in the instructions stay literal). Rendering is
strict: a missing field raises.
"""

from __future__ import annotations

from importlib import resources
from string import Template

_CACHE: dict[str, Template] = {}

TEMPLATES = (
    "keyphrase",
    "cluster",
    "cluster_merge",
    "synthesis_gsm8k",
    "synthesis_math",
)


def load_template(name: str) -> Template:
    tpl = _CACHE.get(name)
    if tpl is None:
        text = resources.files("errloop.templates").joinpath(f"{name}.txt").read_text("utf-8")
        tpl = Template(text)
        _CACHE[name] = tpl
    return tpl


def render(name: str, **fields: str) -> str:
    return load_template(name).substitute(**fields)
