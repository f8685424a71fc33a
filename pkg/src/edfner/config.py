"""TOML run configuration: flat sections mirroring the module configs.

Sections: [run], [normalization], [ner], [ner.mock], [filter], [filter.mock],
[decomposer]. Precedence: command-line flags > environment variables
(EDF_ENDPOINT, EDF_FILTER_ENDPOINT, EDF_TIMEOUT_MS) > config file. A copy of
the effective configuration is stored in each run directory for provenance.
"""
from __future__ import annotations

import os
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .backend import (
    CLASSIFIER,
    FILTER_DECODING,
    MOCK,
    NER_DECODING,
    BackendDescriptor,
    ClassifierMock,
    DecodingConfig,
    EchoMock,
    GazetteerNerMock,
)
from .corpus import NEGATION_CUES, Corpus, demo_gazetteer, load_gazetteer
from .filtering import FilterConfig
from .pipeline import RunConfig
from .types import NormalizationConfig, SubTypeSet, entity_type

ENV_NER_ENDPOINT = "EDF_ENDPOINT"
ENV_FILTER_ENDPOINT = "EDF_FILTER_ENDPOINT"
ENV_TIMEOUT_MS = "EDF_TIMEOUT_MS"


class ConfigError(ValueError):
    """A problem in the run configuration; reported as a usage error."""


def load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _timeout_from_env(default: float) -> float:
    raw = os.environ.get(ENV_TIMEOUT_MS)
    if raw is None:
        return default
    try:
        return float(raw) / 1000.0
    except ValueError as exc:
        raise ConfigError(f"{ENV_TIMEOUT_MS} must be a number of milliseconds, got {raw!r}") from exc


def _normalization(section: dict) -> NormalizationConfig:
    return NormalizationConfig(
        lowercase=section.get("lowercase", True),
        collapse_whitespace=section.get("collapse_whitespace", True),
        strip_edge_punctuation=section.get("strip_edge_punctuation", False),
    )


def _decoding(section: dict, defaults: DecodingConfig) -> DecodingConfig:
    return DecodingConfig(
        max_new_tokens=int(section.get("max_new_tokens", defaults.max_new_tokens)),
        temperature=float(section.get("temperature", defaults.temperature)),
        top_p=float(section.get("top_p", defaults.top_p)),
    )


def _resolve_path(base: Path, value: str) -> str:
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def _ner_descriptor(section: dict, base: Path, norm: NormalizationConfig) -> BackendDescriptor:
    kind = section.get("kind", "single_type")
    decoding = _decoding(section, NER_DECODING)
    common = dict(
        template=section.get("template", "uniner" if kind != "multi_type" else "gner"),
        decoding=decoding,
        max_attempts=int(section.get("max_attempts", 3)),
        base_backoff=float(section.get("base_backoff", 0.5)),
        timeout=_timeout_from_env(float(section.get("timeout_ms", 30000)) / 1000.0),
        max_concurrency=int(section.get("max_concurrency", 8)),
        granularity=section.get("granularity", "document"),
    )
    if kind == MOCK:
        mock_section = section.get("mock", {})
        gazetteer_path = mock_section.get("gazetteer")
        if gazetteer_path:
            gazetteer = load_gazetteer(_resolve_path(base, gazetteer_path))
        else:
            gazetteer = demo_gazetteer(mock_section.get("demo_target", "treatment"))
        mock = GazetteerNerMock(
            gazetteer,
            contamination_rate=float(mock_section.get("contamination_rate", 0.0)),
            seed=int(mock_section.get("seed", 0)),
            normalization=norm,
        )
        return BackendDescriptor(
            kind=MOCK, mock=mock, multi=bool(mock_section.get("multi", False)), **common
        )
    endpoint = os.environ.get(ENV_NER_ENDPOINT) or section.get("endpoint", "")
    if not endpoint:
        raise ConfigError(
            "[ner].endpoint is required for a live backend (or set EDF_ENDPOINT, "
            "or use kind = 'mock')"
        )
    return BackendDescriptor(kind=kind, endpoint=endpoint, **common)


def _filter_config(
    section: dict, base: Path, norm: NormalizationConfig, corpus: Corpus | None
) -> FilterConfig:
    kind = section.get("kind", CLASSIFIER)
    decoding = _decoding(section, FILTER_DECODING)
    common = dict(
        template=section.get("template", "asclepius"),
        decoding=decoding,
        max_attempts=int(section.get("max_attempts", 3)),
        base_backoff=float(section.get("base_backoff", 0.5)),
        timeout=_timeout_from_env(float(section.get("timeout_ms", 30000)) / 1000.0),
        max_concurrency=int(section.get("max_concurrency", 8)),
        server_constrained=bool(section.get("server_constrained", False)),
    )
    if kind == MOCK:
        mock_section = section.get("mock", {})
        policy = mock_section.get("policy", "fixed")
        gold_surfaces = {}
        if policy == "oracle":
            if corpus is None:
                raise ConfigError("[filter.mock] policy 'oracle' needs a corpus to take gold from")
            gold_surfaces = {
                t.name.lower(): corpus.gold_surfaces(t.name, norm) for t in corpus.type_catalog
            }
        mock = ClassifierMock(
            policy=policy,
            lp_yes=float(mock_section.get("lp_yes", -0.05)),
            lp_no=float(mock_section.get("lp_no", -3.0)),
            gold_surfaces=gold_surfaces,
            negation_cues=tuple(mock_section.get("negation_cues", NEGATION_CUES)),
            seed=int(mock_section.get("seed", 0)),
            normalization=norm,
        )
        backend = BackendDescriptor(kind=MOCK, mock=mock, **common)
    else:
        endpoint = os.environ.get(ENV_FILTER_ENDPOINT) or section.get("endpoint", "")
        if not endpoint:
            raise ConfigError(
                "[filter].endpoint is required for a live filter backend "
                "(or set EDF_FILTER_ENDPOINT, or use kind = 'mock')"
            )
        backend = BackendDescriptor(kind=CLASSIFIER, endpoint=endpoint, **common)
    return FilterConfig(
        backend=backend,
        context_mode=section.get("context", "none"),
        prompt_variant=section.get("prompt", "default"),
        threshold=float(section.get("threshold", 0.0)),
        normalization=norm,
    )


def build_run_config(
    raw: dict,
    config_path: str,
    corpus: Corpus | None = None,
    corpus_path: str | None = None,
    out_dir: str | None = None,
    overrides: dict | None = None,
) -> RunConfig:
    """Assemble a RunConfig from a parsed TOML dict plus flag overrides.

    ``overrides`` maps dotted section keys (e.g. ``"filter.threshold"``) to
    values that win over the file.
    """
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        if name:
            raw.setdefault(section, {})[name] = value
        else:
            raw.setdefault("run", {})[section] = value

    base = Path(config_path).parent
    run_section = raw.get("run", {})
    mode = run_section.get("mode")
    if mode is None:
        raise ConfigError("[run].mode is required (baseline, ed, f, or edf)")
    target_names = run_section.get("targets") or run_section.get("target")
    if not target_names:
        raise ConfigError("[run].targets is required (list of entity type names)")
    if isinstance(target_names, str):
        target_names = [target_names]

    norm = _normalization(raw.get("normalization", {}))
    ner = _ner_descriptor(raw.get("ner", {}), base, norm)

    filter_cfg = None
    if mode in ("f", "edf"):
        if "filter" not in raw:
            raise ConfigError(f"mode {mode!r} requires a [filter] section")
        filter_cfg = _filter_config(raw["filter"], base, norm, corpus)

    decomposer_section = raw.get("decomposer", {})
    source = decomposer_section.get("source") or run_section.get("decomposer_source")
    explicit = decomposer_section.get("subtypes", {})
    if mode in ("ed", "edf") and not source and not explicit:
        raise ConfigError(f"mode {mode!r} requires [decomposer].source or explicit sub-type lists")

    subtype_sets = {}
    for name, subtypes in explicit.items():
        subtype_sets[name.lower()] = SubTypeSet(
            target=name, source="custom", subtypes=tuple(subtypes)
        )

    snapshot = {
        "run": {
            "mode": mode,
            "targets": list(target_names),
            "corpus": corpus_path or run_section.get("corpus"),
            "concurrency": int(run_section.get("concurrency", 1)),
        },
        "normalization": {
            "lowercase": norm.lowercase,
            "collapse_whitespace": norm.collapse_whitespace,
            "strip_edge_punctuation": norm.strip_edge_punctuation,
        },
        "ner": _public_section(raw.get("ner", {})),
        "filter": _public_section(raw.get("filter", {})) if raw.get("filter") else {},
        "decomposer": {"source": source, "subtypes": {k: list(v) for k, v in explicit.items()}},
    }

    return RunConfig(
        mode=mode,
        targets=tuple(entity_type(n) for n in target_names),
        ner=ner,
        decomposer_source=source,
        subtype_sets=subtype_sets,
        include_target=bool(decomposer_section.get("include_target", True)),
        filter=filter_cfg,
        normalization=norm,
        concurrency=int(run_section.get("concurrency", 1)),
        out_dir=out_dir,
        config_snapshot=snapshot,
    )


def _public_section(section: dict) -> dict:
    """Config snapshot form of a backend section (JSON-serializable, no secrets)."""
    out = {}
    for key, value in section.items():
        if isinstance(value, dict):
            out[key] = _public_section(value)
        else:
            out[key] = value
    return out


def echo_backend(response: str) -> BackendDescriptor:
    """Convenience descriptor for a canned-response mock (used for LLM decomposition)."""
    return BackendDescriptor(kind=MOCK, mock=EchoMock(default=response))
