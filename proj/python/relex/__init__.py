"""Python bindings for the relex relation extraction agent."""

from ._relex import (
    ConfigError,
    DatasetError,
    Error,
    ParseError,
    PreconditionError,
    ScriptMissError,
    TransportError,
    ablate,
    distill,
    extract,
    format_triples,
    load_config,
    lowres,
    memcurve,
    normalize_triple,
    parse_triples,
    score,
)

__all__ = [
    "ConfigError",
    "DatasetError",
    "Error",
    "ParseError",
    "PreconditionError",
    "ScriptMissError",
    "TransportError",
    "ablate",
    "distill",
    "extract",
    "format_triples",
    "load_config",
    "lowres",
    "memcurve",
    "normalize_triple",
    "parse_triples",
    "score",
]
