"""Uniform completion-provider interface with metering and caching.

Everything that talks to a language model goes through ``complete``:
retries with exponential backoff, token accounting (provider-reported
usage when present, a character-count estimate otherwise), a response
cache keyed by prompt/model/temperature, and a thread-safe cost ledger.
Providers are small objects exposing ``send``; the HTTP one speaks the
chat-completions wire shape, the scripted and oracle ones exist for
tests and benchmark runs that must cost nothing.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import requests

from .corpus import EXCLUDE, INCLUDE
from .rng import derive_rng


class ProviderError(RuntimeError):
    """Terminal provider failure (bad request, exhausted retries)."""


class TransientProviderError(ProviderError):
    """Retryable failure: timeouts, rate limits, server errors."""


class UnparseableResponse(ValueError):
    """Model output carried no usable decision."""


@dataclass(frozen=True)
class LlmResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    model_id: str

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be nonnegative")


@dataclass(frozen=True)
class Decision:
    label: str  # include | exclude
    confidence: float | None = None

    def __post_init__(self):
        if self.label not in (INCLUDE, EXCLUDE):
            raise ValueError(f"bad decision label {self.label!r}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0,1]")


@dataclass(frozen=True)
class ModelPricing:
    input_usd_per_mtok: float
    output_usd_per_mtok: float

    def __post_init__(self):
        if self.input_usd_per_mtok < 0 or self.output_usd_per_mtok < 0:
            raise ValueError("pricing must be nonnegative")

    def cost(self, prompt_tokens: int, completion_tokens: int) -> float:
        return (
            prompt_tokens / 1e6 * self.input_usd_per_mtok
            + completion_tokens / 1e6 * self.output_usd_per_mtok
        )


@dataclass
class LedgerEntry:
    """Token and call counters for one model."""

    prompt_tokens: int = 0
    completion_tokens: int = 0
    call_count: int = 0  # attempts, not successes
    cache_hits: int = 0


class CostLedger:
    """Per-model accumulators; dollars are always recomputed from tokens.

    There is deliberately no incremental usd counter to drift out of sync
    with the token totals.
    """

    def __init__(self, pricing: dict[str, ModelPricing] | None = None):
        self._entries: dict[str, LedgerEntry] = {}
        self._pricing: dict[str, ModelPricing] = dict(pricing or {})
        self._lock = threading.Lock()

    def set_pricing(self, model_id: str, pricing: ModelPricing) -> None:
        with self._lock:
            self._pricing[model_id] = pricing

    def record(
        self,
        model_id: str,
        prompt_tokens: int,
        completion_tokens: int,
        attempts: int = 1,
    ) -> None:
        with self._lock:
            e = self._entries.setdefault(model_id, LedgerEntry())
            e.prompt_tokens += prompt_tokens
            e.completion_tokens += completion_tokens
            e.call_count += attempts

    def record_cache_hit(self, model_id: str) -> None:
        with self._lock:
            self._entries.setdefault(model_id, LedgerEntry()).cache_hits += 1

    def entry(self, model_id: str) -> LedgerEntry:
        with self._lock:
            e = self._entries.get(model_id, LedgerEntry())
            return LedgerEntry(
                e.prompt_tokens, e.completion_tokens, e.call_count, e.cache_hits
            )

    def models(self) -> list[str]:
        with self._lock:
            return sorted(self._entries)

    def usd_for(self, model_id: str) -> float:
        with self._lock:
            e = self._entries.get(model_id)
            p = self._pricing.get(model_id)
            if e is None or p is None:
                return 0.0
            return p.cost(e.prompt_tokens, e.completion_tokens)

    @property
    def usd_total(self) -> float:
        return sum(self.usd_for(m) for m in self.models())

    def merge(self, other: "CostLedger") -> None:
        """Fold another ledger's counters into this one."""
        for model_id in other.models():
            e = other.entry(model_id)
            with self._lock:
                mine = self._entries.setdefault(model_id, LedgerEntry())
                mine.prompt_tokens += e.prompt_tokens
                mine.completion_tokens += e.completion_tokens
                mine.call_count += e.call_count
                mine.cache_hits += e.cache_hits
        with other._lock:
            pricing = dict(other._pricing)
        for model_id, p in pricing.items():
            with self._lock:
                self._pricing.setdefault(model_id, p)

    def to_dict(self) -> dict:
        out = {}
        for model_id in self.models():
            e = self.entry(model_id)
            out[model_id] = {
                "prompt_tokens": e.prompt_tokens,
                "completion_tokens": e.completion_tokens,
                "call_count": e.call_count,
                "cache_hits": e.cache_hits,
                "usd": self.usd_for(model_id),
            }
        return out


def estimate_tokens(text: str) -> int:
    """Character-count fallback when a provider reports no usage."""
    return math.ceil(len(text) / 4)


def estimate_cost(entry: LedgerEntry, pricing: ModelPricing) -> float:
    return pricing.cost(entry.prompt_tokens, entry.completion_tokens)


_DECISION_WORDS = ("include", "exclude")


def _last_decision_word(text: str) -> str | None:
    matches = re.findall(r"\b(include|exclude)\b", text, flags=re.IGNORECASE)
    return matches[-1].lower() if matches else None


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(text[idx:])
        except ValueError:
            pass
        else:
            if isinstance(obj, dict):
                return obj
        idx = text.find("{", idx + 1)
    return None


def parse_decision(text: str, expects_confidence: bool) -> Decision:
    """Extract the screening decision from raw model output.

    Plain strategies take the LAST standalone include/exclude word, so
    chain-of-thought ramble before a final answer parses correctly.  The
    confidence strategy reads the first JSON object instead; a bad
    "decision" field there is unparseable even if prose elsewhere would
    have matched.
    """
    if not expects_confidence:
        word = _last_decision_word(text)
        if word is None:
            raise UnparseableResponse("no include/exclude decision in output")
        return Decision(label=word)
    obj = _first_json_object(text)
    if obj is None:
        raise UnparseableResponse("no JSON object in output")
    label = obj.get("decision")
    if not isinstance(label, str) or label.strip().lower() not in _DECISION_WORDS:
        raise UnparseableResponse(f"JSON decision field invalid: {label!r}")
    conf = obj.get("confidence")
    if isinstance(conf, bool) or not isinstance(conf, (int, float)) or math.isnan(conf):
        confidence = None
    else:
        confidence = max(0.0, min(1.0, float(conf)))
    return Decision(label=label.strip().lower(), confidence=confidence)


class ResponseCache:
    """Completion cache keyed by (prompt digest, model, temperature).

    Optionally persisted as append-only JSONL so warm reruns and
    threshold sweeps replay earlier calls for free.
    """

    def __init__(self, path: str | None = None):
        self.path = path
        self._mem: dict[str, LlmResponse] = {}
        self._lock = threading.Lock()
        self._loaded = path is None

    @staticmethod
    def key(prompt_text: str, model_id: str, temperature: float) -> str:
        digest = hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()
        return f"{digest}:{model_id}:{repr(float(temperature))}"

    def _ensure_loaded(self) -> None:
        if self._loaded:
            return
        self._loaded = True
        if not os.path.exists(self.path):
            return
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                self._mem[row["key"]] = LlmResponse(
                    text=row["text"],
                    prompt_tokens=row["prompt_tokens"],
                    completion_tokens=row["completion_tokens"],
                    model_id=row["model_id"],
                )

    def get(self, key: str) -> LlmResponse | None:
        with self._lock:
            self._ensure_loaded()
            return self._mem.get(key)

    def put(self, key: str, response: LlmResponse) -> None:
        with self._lock:
            self._ensure_loaded()
            if key in self._mem:
                return
            self._mem[key] = response
            if self.path:
                row = {
                    "key": key,
                    "text": response.text,
                    "prompt_tokens": response.prompt_tokens,
                    "completion_tokens": response.completion_tokens,
                    "model_id": response.model_id,
                }
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(row) + "\n")

    def __len__(self) -> int:
        with self._lock:
            self._ensure_loaded()
            return len(self._mem)


MAX_ATTEMPTS = 3
DEFAULT_TIMEOUT = 60.0


def complete(
    prompt_text: str,
    provider,
    ledger: CostLedger,
    temperature: float = 0.0,
    max_tokens: int | None = None,
    cache: ResponseCache | None = None,
    tags: dict | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> LlmResponse:
    """One metered completion: cache check, retries, token accounting.

    Transient failures are retried up to three attempts with exponential
    backoff; every attempt lands in the ledger's call_count.  A cache hit
    adds nothing but a cache_hits tick, so replays cost $0.
    """
    key = None
    if cache is not None:
        key = ResponseCache.key(prompt_text, provider.model_id, temperature)
        hit = cache.get(key)
        if hit is not None:
            ledger.record_cache_hit(provider.model_id)
            return hit
    attempts = 0
    last_error: Exception | None = None
    response = None
    while attempts < MAX_ATTEMPTS:
        attempts += 1
        try:
            text, p_tok, c_tok = provider.send(
                prompt_text, temperature=temperature, max_tokens=max_tokens, tags=tags
            )
        except TransientProviderError as exc:
            last_error = exc
            if attempts < MAX_ATTEMPTS:
                sleep(2.0 ** (attempts - 1))
            continue
        except ProviderError as exc:
            ledger.record(provider.model_id, 0, 0, attempts=attempts)
            raise
        if p_tok is None:
            p_tok = estimate_tokens(prompt_text)
        if c_tok is None:
            c_tok = estimate_tokens(text)
        response = LlmResponse(
            text=text,
            prompt_tokens=p_tok,
            completion_tokens=c_tok,
            model_id=provider.model_id,
        )
        break
    if response is None:
        ledger.record(provider.model_id, 0, 0, attempts=attempts)
        raise ProviderError(
            f"provider {provider.model_id} failed after {attempts} attempts: {last_error}"
        )
    ledger.record(
        response.model_id,
        response.prompt_tokens,
        response.completion_tokens,
        attempts=attempts,
    )
    if cache is not None:
        cache.put(key, response)
    return response


@dataclass
class ScriptedProvider:
    """Queue-driven provider for tests: strings respond, exceptions raise."""

    model_id: str
    script: list = field(default_factory=list)
    report_usage: bool = True
    calls: list = field(default_factory=list)

    def send(self, prompt_text, temperature, max_tokens, tags):
        self.calls.append({"prompt": prompt_text, "temperature": temperature, "tags": tags})
        if not self.script:
            raise ProviderError(f"{self.model_id}: script exhausted")
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        text = str(item)
        if self.report_usage:
            return text, estimate_tokens(prompt_text), estimate_tokens(text)
        return text, None, None


class HttpChatProvider:
    """Chat-completions endpoint speaking the common JSON wire shape."""

    def __init__(
        self,
        model_id: str,
        url: str,
        api_key: str | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self.model_id = model_id
        self.url = url
        self.api_key = api_key
        self.timeout = timeout

    def send(self, prompt_text, temperature, max_tokens, tags):
        payload = {
            "model": self.model_id,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": temperature,
        }
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                self.url, json=payload, headers=headers, timeout=self.timeout
            )
        except requests.Timeout as exc:
            raise TransientProviderError(f"timeout: {exc}") from None
        except requests.RequestException as exc:
            raise TransientProviderError(f"transport error: {exc}") from None
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion response: {exc}") from None
        usage = body.get("usage") or {}
        p_tok = usage.get("prompt_tokens")
        c_tok = usage.get("completion_tokens")
        return text, p_tok, c_tok


@dataclass(frozen=True)
class OracleProfile:
    """Behavior knobs for the gold-label-driven stand-in provider."""

    acc_hi: float  # correctness when confident
    acc_lo: float  # correctness when unsure
    p_hi: float  # chance of a confident answer

    def __post_init__(self):
        for name in ("acc_hi", "acc_lo", "p_hi"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")


class OracleProvider:
    """Deterministic fake model keyed on gold labels.

    Each request must carry a record_id tag; the response stream is a
    pure function of (seed, model_id, record_id), so identical requests
    give identical answers no matter the call order or thread count.
    Confidence values are emitted unrounded: rounding could push a value
    across the routing threshold.
    """

    def __init__(
        self,
        model_id: str,
        gold: dict[str, str],
        profile: OracleProfile,
        seed: int,
    ):
        self.model_id = model_id
        self.gold = gold
        self.profile = profile
        self.seed = seed

    def send(self, prompt_text, temperature, max_tokens, tags):
        record_id = (tags or {}).get("record_id")
        if not record_id:
            raise ProviderError(f"{self.model_id}: request lacks a record_id tag")
        if record_id not in self.gold:
            raise ProviderError(f"{self.model_id}: no gold label for {record_id!r}")
        rng = derive_rng(self.seed, self.model_id, record_id)
        confident = rng.random() < self.profile.p_hi
        if confident:
            confidence = 0.9 + 0.1 * rng.random()
            accuracy = self.profile.acc_hi
        else:
            confidence = 0.9 * rng.random()
            accuracy = self.profile.acc_lo
        correct = rng.random() < accuracy
        truth = self.gold[record_id]
        label = truth if correct else (EXCLUDE if truth == INCLUDE else INCLUDE)
        text = json.dumps({"confidence": confidence, "decision": label})
        return text, estimate_tokens(prompt_text), estimate_tokens(text)


def oracle_provider(
    gold: dict[str, str], profile: OracleProfile, seed: int, model_id: str = "oracle"
) -> OracleProvider:
    return OracleProvider(model_id=model_id, gold=gold, profile=profile, seed=seed)
