"""Python bindings for the taxoria enrichment core."""

from ._core import (
    TaxoriaError,
    build_prompt,
    cosine,
    enrich,
    merge,
    normalize,
    parse_children,
    replay_key,
    validate,
)

__all__ = [
    "TaxoriaError",
    "build_prompt",
    "cosine",
    "enrich",
    "merge",
    "normalize",
    "parse_children",
    "replay_key",
    "validate",
]
