"""Clients for open-NER and yes/no classifier model services, plus deterministic mocks.

The wire protocol is a minimal OpenAI-compatible completions endpoint:
``POST {prompt, max_tokens, temperature, top_p, logprobs}`` returning
``{text, logprobs}`` (a flat body or the first element of ``choices``).
Yes/No constrained decoding is realized client-side by scoring the two
candidate continuations from the first-token log-probabilities, unless the
server advertises native constraint support.

Mock servers answer the same ``complete()`` interface from a gazetteer or a
classification policy; their responses are raw model-style text that flows
through the same parsers as live responses.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import re
import threading
import time
from dataclasses import dataclass, field

import requests

from .corpus import Gazetteer
from .templates import render_prompt
from .types import (
    DEFAULT_NORMALIZATION,
    Document,
    NormalizationConfig,
    normalize,
)

log = logging.getLogger(__name__)

SINGLE_TYPE = "single_type"
MULTI_TYPE = "multi_type"
CLASSIFIER = "classifier"
MOCK = "mock"
BACKEND_KINDS = (SINGLE_TYPE, MULTI_TYPE, CLASSIFIER, MOCK)

YES_NO = "yes_no"


class BackendError(RuntimeError):
    """Transport, protocol, or response-shape failure talking to a model service."""


class ResponseParseError(BackendError):
    """Model output could not be interpreted; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}; raw response: {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_new_tokens: int = 256
    temperature: float = 0.0
    top_p: float = 1.0
    want_logprobs: bool = False
    constraint: str | None = None  # "yes_no" or None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.constraint not in (None, YES_NO):
            raise ValueError(f"unknown constraint {self.constraint!r}")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    first_token_candidates: dict[str, float] | None = None
    attempts: int = 1


@dataclass(frozen=True)
class DecodingConfig:
    max_new_tokens: int = 256
    temperature: float = 0.0
    top_p: float = 1.0


# Open NER models decode greedily; filter models sample lightly.
NER_DECODING = DecodingConfig(max_new_tokens=256, temperature=0.0, top_p=1.0)
FILTER_DECODING = DecodingConfig(max_new_tokens=4, temperature=0.2, top_p=0.95)


@dataclass(frozen=True)
class BackendDescriptor:
    """How to reach one model service and how to talk to it."""

    kind: str
    endpoint: str = ""
    template: str = "uniner"
    decoding: DecodingConfig = NER_DECODING
    max_attempts: int = 3
    base_backoff: float = 0.5
    timeout: float = 30.0
    max_concurrency: int = 8
    server_constrained: bool = False
    granularity: str = "document"  # feed whole documents or one sentence per call
    instruction_single: str = "What describes {entity_type} in the text?"
    instruction_multi: str = "Use the specific entity tags: {entity_types} and O."
    multi: bool = False  # for mocks: answer multi-type (BIO) extraction calls
    mock: "MockBackendServer | None" = None

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == MOCK and self.mock is None:
            raise ValueError("mock backend descriptor needs a mock server instance")
        if self.kind != MOCK and not self.endpoint:
            raise ValueError(f"backend kind {self.kind!r} needs an endpoint")
        if self.granularity not in ("document", "sentence"):
            raise ValueError(f"unknown input granularity {self.granularity!r}")

    @property
    def supports_multi(self) -> bool:
        return self.kind == MULTI_TYPE or (self.kind == MOCK and self.multi)


_semaphores: dict[tuple[str, int], threading.BoundedSemaphore] = {}
_semaphores_lock = threading.Lock()


def _endpoint_semaphore(desc: BackendDescriptor) -> threading.BoundedSemaphore:
    key = (desc.endpoint, desc.max_concurrency)
    with _semaphores_lock:
        if key not in _semaphores:
            _semaphores[key] = threading.BoundedSemaphore(desc.max_concurrency)
        return _semaphores[key]


def _parse_body(body: dict) -> tuple[str, dict[str, float] | None]:
    if "choices" in body:
        choices = body["choices"]
        if not isinstance(choices, list) or not choices:
            raise BackendError("malformed body: empty choices")
        choice = choices[0]
        text = choice.get("text")
        logprobs = choice.get("logprobs")
        if isinstance(logprobs, dict) and "top_logprobs" in logprobs:
            tops = logprobs.get("top_logprobs") or []
            logprobs = tops[0] if tops else None
    else:
        text = body.get("text")
        logprobs = body.get("logprobs")
    if not isinstance(text, str):
        raise BackendError(f"malformed body: no text field in {body!r}")
    if logprobs is not None:
        if not isinstance(logprobs, dict):
            raise BackendError("malformed body: logprobs is not a token->logprob map")
        logprobs = {str(k): float(v) for k, v in logprobs.items()}
    return text, logprobs


def _http_complete(req: CompletionRequest, desc: BackendDescriptor) -> CompletionResponse:
    payload = {
        "prompt": req.prompt,
        "max_tokens": req.max_new_tokens,
        "temperature": req.temperature,
        "top_p": req.top_p,
        "logprobs": req.want_logprobs,
    }
    if desc.server_constrained and req.constraint:
        payload["constraint"] = req.constraint
    delay = desc.base_backoff
    last_error = "no attempt made"
    semaphore = _endpoint_semaphore(desc)
    for attempt in range(1, desc.max_attempts + 1):
        try:
            with semaphore:
                response = requests.post(desc.endpoint, json=payload, timeout=desc.timeout)
        except requests.RequestException as exc:
            last_error = f"request failed: {exc}"
        else:
            if 500 <= response.status_code < 600:
                last_error = f"server error {response.status_code}"
            elif not response.ok:
                raise BackendError(
                    f"{desc.endpoint} returned {response.status_code}: {response.text[:200]}"
                )
            else:
                try:
                    body = response.json()
                except ValueError as exc:
                    raise BackendError(f"malformed body: not JSON ({exc})") from exc
                text, logprobs = _parse_body(body)
                return CompletionResponse(
                    text=text, first_token_candidates=logprobs, attempts=attempt
                )
        if attempt < desc.max_attempts:
            log.debug("retrying %s after %s (attempt %d)", desc.endpoint, last_error, attempt)
            time.sleep(delay)
            delay *= 2
    raise BackendError(
        f"{desc.endpoint} failed after {desc.max_attempts} attempts: {last_error}"
    )


def yes_no_logprobs(resp: CompletionResponse) -> tuple[float, float]:
    """Look up the 'Yes'/'No' candidates among the first-token log-probabilities."""
    candidates = resp.first_token_candidates
    if not candidates:
        raise BackendError("logprobs requested but absent from response")
    lp_yes = lp_no = None
    for token, lp in candidates.items():
        stripped = token.strip().lower()
        if stripped == "yes" and lp_yes is None:
            lp_yes = lp
        elif stripped == "no" and lp_no is None:
            lp_no = lp
    if lp_yes is None or lp_no is None:
        raise ResponseParseError(
            "yes/no candidates missing from first-token logprobs", str(candidates)
        )
    return lp_yes, lp_no


def complete(req: CompletionRequest, desc: BackendDescriptor) -> CompletionResponse:
    """Issue one completion, retrying transient failures, honoring yes/no constraints."""
    if desc.kind == MOCK:
        resp = desc.mock.handle(req)
    else:
        resp = _http_complete(req, desc)
    if req.constraint == YES_NO:
        if desc.server_constrained:
            if resp.text not in ("Yes", "No"):
                raise ResponseParseError("constrained output not in {'Yes', 'No'}", resp.text)
            return resp
        lp_yes, lp_no = yes_no_logprobs(resp)
        text = "Yes" if lp_yes > lp_no else "No"  # ties resolve to "No"
        return CompletionResponse(
            text=text,
            first_token_candidates=resp.first_token_candidates,
            attempts=resp.attempts,
        )
    return resp


# ---------------------------------------------------------------------------
# Model output parsers
# ---------------------------------------------------------------------------

def parse_entity_list(raw: str) -> list[str]:
    """Parse an extracted-entity response: a bracketed array of quoted strings,
    falling back to a plain newline/comma-separated list."""
    s = raw.strip()
    if not s:
        raise ResponseParseError("no list-like content found", raw)
    if "[" in s and "]" in s:
        fragment = s[s.index("["): s.rindex("]") + 1]
        try:
            data = json.loads(fragment)
        except ValueError:
            data = None
        if isinstance(data, list):
            return [str(item).strip() for item in data if str(item).strip()]
    items = [piece.strip() for line in s.splitlines() for piece in line.split(",")]
    items = [i for i in items if i]
    if not items:
        raise ResponseParseError("no list-like content found", raw)
    return items


_BIO_PAIR = re.compile(r"(\S+?)\(([^()]*)\)")


def iter_bio_pairs(raw: str):
    """Yield (token, label) pairs from a ``tok(label), tok(label)`` stream."""
    pos, n = 0, len(raw)
    while pos < n:
        while pos < n and (raw[pos].isspace() or raw[pos] == ","):
            pos += 1
        if pos >= n:
            return
        m = _BIO_PAIR.match(raw, pos)
        if m is None:
            raise ResponseParseError(
                f"token missing its parenthesized label near {raw[pos:pos + 40]!r}", raw
            )
        yield m.group(1), m.group(2)
        pos = m.end()


def parse_bio(raw: str) -> list[tuple[str, str]]:
    """Decode a token(label) stream into (surface, type) entities.

    Maximal B-X (I-X)* runs join their tokens with single spaces. An I- tag
    that does not continue an open entity of the same type starts a new one
    (warned); labels that are not O/B-/I- are warned about and treated as O.
    """
    entities: list[tuple[str, str]] = []
    run_tokens: list[str] = []
    run_type: str | None = None

    def _flush() -> None:
        nonlocal run_tokens, run_type
        if run_type is not None and run_tokens:
            entities.append((" ".join(run_tokens), run_type))
        run_tokens, run_type = [], None

    for token, label in iter_bio_pairs(raw):
        if label == "O":
            _flush()
        elif label.startswith("B-"):
            _flush()
            run_tokens, run_type = [token], label[2:]
        elif label.startswith("I-"):
            if run_type == label[2:]:
                run_tokens.append(token)
            else:
                log.warning("I-%s does not continue an open entity; starting a new one", label[2:])
                _flush()
                run_tokens, run_type = [token], label[2:]
        else:
            log.warning("unknown BIO label %r; treating as O", label)
            _flush()
    _flush()
    return entities


def render_bio(pairs: list[tuple[str, str]]) -> str:
    """Render (token, label) pairs to the comma-separated token(label) format."""
    return ", ".join(f"{token}({label})" for token, label in pairs)


# ---------------------------------------------------------------------------
# Extraction operations
# ---------------------------------------------------------------------------

def _input_units(doc: Document, desc: BackendDescriptor) -> list[str]:
    """The text chunks one extraction works over, per the configured granularity."""
    if desc.granularity == "sentence" and doc.sentences:
        return [doc.slice(span) for span in doc.sentences]
    return [doc.text]


def _extract_single_text(doc_id: str, text: str, subtype: str, desc: BackendDescriptor) -> list[str]:
    instruction = desc.instruction_single.format(entity_type=subtype)
    prompt = render_prompt(desc.template, {"input": text, "instruction": instruction})
    req = CompletionRequest(
        prompt=prompt,
        max_new_tokens=desc.decoding.max_new_tokens,
        temperature=desc.decoding.temperature,
        top_p=desc.decoding.top_p,
        meta={"op": "extract", "doc_id": doc_id, "doc_text": text, "subtype": subtype},
    )
    resp = complete(req, desc)
    if resp.text.strip().lower() in ("none", "none."):
        return []
    return parse_entity_list(resp.text)


def extract_single(doc: Document, subtype: str, desc: BackendDescriptor) -> list[str]:
    """Retrieve entities of ``subtype`` from the document.

    One backend call per input unit: the whole document, or each sentence when
    the descriptor asks for sentence granularity.
    """
    if desc.kind not in (SINGLE_TYPE, MOCK):
        raise ValueError(f"extract_single needs a single_type or mock backend, got {desc.kind}")
    out: list[str] = []
    for text in _input_units(doc, desc):
        out.extend(_extract_single_text(doc.id, text, subtype, desc))
    return out


def extract_multi(
    doc: Document, subtypes: list[str], desc: BackendDescriptor
) -> dict[str, list[str]]:
    """Retrieve several sub-types in one call per input unit; labels outside the
    requested set are dropped with a warning."""
    if desc.kind not in (MULTI_TYPE, MOCK):
        raise ValueError(f"extract_multi needs a multi_type or mock backend, got {desc.kind}")
    labels = list(subtypes)
    instruction = desc.instruction_multi.format(entity_types=", ".join(labels))
    canonical = {label.lower(): label for label in labels}
    out: dict[str, list[str]] = {label: [] for label in labels}
    for text in _input_units(doc, desc):
        prompt = render_prompt(desc.template, {"input": text, "instruction": instruction})
        req = CompletionRequest(
            prompt=prompt,
            max_new_tokens=desc.decoding.max_new_tokens,
            temperature=desc.decoding.temperature,
            top_p=desc.decoding.top_p,
            meta={"op": "extract_multi", "doc_id": doc.id, "doc_text": text, "subtypes": labels},
        )
        resp = complete(req, desc)
        for surface, label in parse_bio(resp.text):
            known = canonical.get(label.lower())
            if known is None:
                log.warning(
                    "dropping entity %r with label %r outside the requested set", surface, label
                )
                continue
            out[known].append(surface)
    return out


# ---------------------------------------------------------------------------
# Mock servers
# ---------------------------------------------------------------------------

def _derived_rng(*parts: object) -> random.Random:
    """RNG seeded from a stable digest of the parts (independent of process hash seed)."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class MockBackendServer:
    """Base for in-process stand-ins for model services; counts every call."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0
        self.call_log: list[dict] = []

    def _record(self, req: CompletionRequest) -> None:
        with self._lock:
            self.calls += 1
            self.call_log.append(dict(req.meta) or {"op": "complete", "prompt": req.prompt})

    def handle(self, req: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError


class EchoMock(MockBackendServer):
    """Returns canned responses by prompt, a default response, or echoes the prompt."""

    def __init__(self, canned: dict[str, str] | None = None, default: str | None = None):
        super().__init__()
        self.canned = dict(canned or {})
        self.default = default

    def handle(self, req: CompletionRequest) -> CompletionResponse:
        self._record(req)
        if req.prompt in self.canned:
            return CompletionResponse(text=self.canned[req.prompt])
        if self.default is not None:
            return CompletionResponse(text=self.default)
        return CompletionResponse(text=req.prompt)


def _clean_token(token: str) -> str:
    return normalize(
        token,
        NormalizationConfig(lowercase=False, collapse_whitespace=False, strip_edge_punctuation=True),
    )


class GazetteerNerMock(MockBackendServer):
    """Answers extraction calls by substring-matching gazetteer surfaces against the
    normalized document, optionally mixing in off-type contamination surfaces.

    Deterministic: the contamination draw is a pure function of
    (seed, doc id, sub-type, surface), independent of call order.
    """

    def __init__(
        self,
        gazetteer: Gazetteer,
        contamination_rate: float = 0.0,
        seed: int = 0,
        normalization: NormalizationConfig = DEFAULT_NORMALIZATION,
    ):
        super().__init__()
        self.gazetteer = gazetteer
        self.contamination_rate = contamination_rate
        self.seed = seed
        self.cfg = normalization

    def _surfaces_for(self, doc_id: str, doc_text: str, subtype: str) -> list[str]:
        haystack = normalize(doc_text, self.cfg)
        found = [
            s for s in self.gazetteer.subtypes.get(subtype, ())
            if normalize(s, self.cfg) in haystack
        ]
        for surface in self.gazetteer.contamination.get(subtype, ()):
            if normalize(surface, self.cfg) not in haystack:
                continue
            rng = _derived_rng(self.seed, doc_id, subtype, surface)
            if rng.random() < self.contamination_rate:
                found.append(surface)
        return found

    def _bio_response(self, doc_text: str, doc_id: str, subtypes: list[str]) -> str:
        tokens = doc_text.split()
        cleaned = [normalize(_clean_token(t), self.cfg) for t in tokens]
        labels = ["O"] * len(tokens)
        claimed = [False] * len(tokens)
        for subtype in subtypes:
            for surface in self._surfaces_for(doc_id, doc_text, subtype):
                want = [normalize(w, self.cfg) for w in surface.split()]
                for start in range(len(tokens) - len(want) + 1):
                    if claimed[start] or cleaned[start:start + len(want)] != want:
                        continue
                    if any(claimed[start:start + len(want)]):
                        continue
                    for k in range(start, start + len(want)):
                        claimed[k] = True
                        labels[k] = ("B-" if k == start else "I-") + subtype
        pairs = [
            (_clean_token(tok) if labels[k] != "O" else tok, labels[k])
            for k, tok in enumerate(tokens)
        ]
        return render_bio(pairs)

    def handle(self, req: CompletionRequest) -> CompletionResponse:
        self._record(req)
        meta = req.meta
        op = meta.get("op")
        if op == "extract":
            surfaces = self._surfaces_for(meta["doc_id"], meta["doc_text"], meta["subtype"])
            return CompletionResponse(text=json.dumps(surfaces))
        if op == "extract_multi":
            text = self._bio_response(meta["doc_text"], meta["doc_id"], meta["subtypes"])
            return CompletionResponse(text=text)
        raise BackendError(f"gazetteer mock cannot answer op {op!r}")


class ClassifierMock(MockBackendServer):
    """Yes/No classification stand-in with pluggable policies.

    Policies:
      fixed      constant log-probabilities
      oracle     yes iff the entity is a gold surface of the asked type
      stochastic p_no drawn from an RNG derived from (seed, entity, type, context)
      polarity   no iff the context contains a negation cue
    """

    def __init__(
        self,
        policy: str = "fixed",
        lp_yes: float = -0.05,
        lp_no: float = -3.0,
        gold_surfaces: dict[str, frozenset[str]] | None = None,
        negation_cues: tuple[str, ...] = (),
        seed: int = 0,
        normalization: NormalizationConfig = DEFAULT_NORMALIZATION,
    ):
        super().__init__()
        if policy not in ("fixed", "oracle", "stochastic", "polarity"):
            raise ValueError(f"unknown classifier mock policy {policy!r}")
        self.policy = policy
        self.lp_yes = lp_yes
        self.lp_no = lp_no
        self.gold_surfaces = gold_surfaces or {}
        self.negation_cues = tuple(c.lower() for c in negation_cues)
        self.seed = seed
        self.cfg = normalization

    def _verdict_logprobs(self, meta: dict) -> tuple[float, float]:
        if self.policy == "fixed":
            return self.lp_yes, self.lp_no
        if self.policy == "oracle":
            surface = normalize(meta.get("entity", ""), self.cfg)
            type_name = str(meta.get("entity_type", "")).lower()
            is_gold = surface in self.gold_surfaces.get(type_name, frozenset())
            return (-0.05, -3.0) if is_gold else (-3.0, -0.05)
        if self.policy == "polarity":
            context = str(meta.get("context", "")).lower()
            negated = any(cue in context for cue in self.negation_cues)
            return (-3.0, -0.05) if negated else (-0.05, -3.0)
        # stochastic: same (entity, type, context) always gets the same verdict
        rng = _derived_rng(
            self.seed, meta.get("entity"), meta.get("entity_type"), meta.get("context")
        )
        p_no = rng.uniform(0.01, 0.99)
        return math.log(1.0 - p_no), math.log(p_no)

    def handle(self, req: CompletionRequest) -> CompletionResponse:
        self._record(req)
        if req.meta.get("op") != "classify":
            raise BackendError(f"classifier mock cannot answer op {req.meta.get('op')!r}")
        lp_yes, lp_no = self._verdict_logprobs(req.meta)
        text = "Yes" if lp_yes > lp_no else "No"
        return CompletionResponse(text=text, first_token_candidates={"Yes": lp_yes, "No": lp_no})


def mock_descriptor(
    mock: MockBackendServer,
    template: str = "uniner",
    multi: bool = False,
    decoding: DecodingConfig = NER_DECODING,
) -> BackendDescriptor:
    return BackendDescriptor(kind=MOCK, template=template, multi=multi, decoding=decoding, mock=mock)
