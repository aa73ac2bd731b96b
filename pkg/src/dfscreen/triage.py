"""Two-stage screening cascade and threshold sensitivity sweep.

Stage 1 screens every record with the cheap model using a dynamically
assembled few-shot prompt.  Records whose reported confidence falls
strictly below the threshold are re-screened by the strong model with
the very same prompt; its answer overrides.  Unparseable stage-1 output
counts as zero confidence so it always escalates; unparseable stage-2
output fails safe to exclude and is flagged for audit.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .clustering import Clustering
from .corpus import EXCLUDE, ReviewDataset, StudyRecord
from .exemplar_pool import ExemplarPool, select_instances
from .gateway import (
    CostLedger,
    Decision,
    ModelPricing,
    ProviderError,
    ResponseCache,
    UnparseableResponse,
    complete,
    parse_decision,
)
from .projection import Point2D
from .prompting import Strategy, render, static_instances

DEFAULT_THRESHOLD = 0.9
DEFAULT_PARALLELISM = 8
DEFAULT_STAGE1_PRICING = ModelPricing(0.40, 1.60)
DEFAULT_STAGE2_PRICING = ModelPricing(2.00, 8.00)


class RunError(RuntimeError):
    """Raised when too many records fail for the run to be trustworthy."""


@dataclass(frozen=True)
class RunConfig:
    stage1_model: str
    stage2_model: str
    strategy: Strategy = Strategy.DYNAMIC_FEW_SHOT
    threshold: float = DEFAULT_THRESHOLD
    stage1_pricing: ModelPricing = DEFAULT_STAGE1_PRICING
    stage2_pricing: ModelPricing = DEFAULT_STAGE2_PRICING
    seed: int = 0
    temperature: float = 0.0
    parallelism: int = DEFAULT_PARALLELISM

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold} outside [0,1]")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")


@dataclass(frozen=True)
class ScreeningResult:
    """Outcome for one record, both stages."""

    record_id: str
    stage1: Decision | None  # None when stage-1 output was unparseable
    routed: bool
    stage2: Decision | None
    final: str
    stage1_prompt_tokens: int = 0
    stage1_completion_tokens: int = 0
    stage2_prompt_tokens: int = 0
    stage2_completion_tokens: int = 0
    unparsed_final: bool = False

    def to_dict(self) -> dict:
        def dec(d: Decision | None):
            if d is None:
                return None
            return {"label": d.label, "confidence": d.confidence}

        return {
            "record_id": self.record_id,
            "stage1": dec(self.stage1),
            "routed": self.routed,
            "stage2": dec(self.stage2),
            "final": self.final,
            "stage1_prompt_tokens": self.stage1_prompt_tokens,
            "stage1_completion_tokens": self.stage1_completion_tokens,
            "stage2_prompt_tokens": self.stage2_prompt_tokens,
            "stage2_completion_tokens": self.stage2_completion_tokens,
            "unparsed_final": self.unparsed_final,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "ScreeningResult":
        def dec(obj):
            if obj is None:
                return None
            return Decision(label=obj["label"], confidence=obj.get("confidence"))

        return cls(
            record_id=row["record_id"],
            stage1=dec(row["stage1"]),
            routed=row["routed"],
            stage2=dec(row["stage2"]),
            final=row["final"],
            stage1_prompt_tokens=row.get("stage1_prompt_tokens", 0),
            stage1_completion_tokens=row.get("stage1_completion_tokens", 0),
            stage2_prompt_tokens=row.get("stage2_prompt_tokens", 0),
            stage2_completion_tokens=row.get("stage2_completion_tokens", 0),
            unparsed_final=row.get("unparsed_final", False),
        )


def effective_confidence(stage1: Decision | None) -> float:
    """Confidence used for routing; unparseable or missing counts as 0."""
    if stage1 is None or stage1.confidence is None:
        return 0.0
    return stage1.confidence


def should_route(stage1: Decision | None, threshold: float) -> bool:
    """Strictly-below rule; a record at exactly the threshold stays put.

    Unparseable output routes unconditionally, even at threshold 0.
    """
    if stage1 is None:
        return True
    return effective_confidence(stage1) < threshold


def _exemplar_instances(
    record: StudyRecord,
    dataset_by_id: dict[str, StudyRecord],
    pool: ExemplarPool,
    clustering: Clustering,
    points: dict[str, Point2D],
) -> list[tuple[StudyRecord, str]]:
    chosen = select_instances(record, pool, clustering, points)
    return [(dataset_by_id[e.record_id], e.label) for e in chosen]


def run_two_stage(
    dataset: ReviewDataset,
    pool: ExemplarPool,
    clustering: Clustering,
    points: dict[str, Point2D],
    cfg: RunConfig,
    stage1_provider,
    stage2_provider,
    criteria: str,
    cache: ResponseCache | None = None,
    failures: list | None = None,
    sleep=time.sleep,
) -> tuple[list[ScreeningResult], CostLedger]:
    """Screen a dataset through the cascade. Results come back id-sorted.

    Individual provider failures are isolated (collected into
    ``failures`` when a list is passed); more than 10% failed records
    aborts with a RunError since the run is no longer representative.
    """
    if cfg.strategy is not Strategy.DYNAMIC_FEW_SHOT:
        raise ValueError("the cascade needs the confidence-reporting strategy")
    ledger = CostLedger(
        {
            stage1_provider.model_id: cfg.stage1_pricing,
            stage2_provider.model_id: cfg.stage2_pricing,
        }
    )
    by_id = dataset.by_id()

    def screen_one(record: StudyRecord) -> ScreeningResult:
        instances = _exemplar_instances(record, by_id, pool, clustering, points)
        prompt = render(cfg.strategy, criteria, record, instances)
        tags = {"record_id": record.id}
        resp1 = complete(
            prompt.text,
            stage1_provider,
            ledger,
            temperature=cfg.temperature,
            cache=cache,
            tags=tags,
            sleep=sleep,
        )
        try:
            d1 = parse_decision(resp1.text, expects_confidence=True)
        except UnparseableResponse:
            d1 = None
        routed = should_route(d1, cfg.threshold)
        d2 = None
        unparsed_final = False
        s2_pt = s2_ct = 0
        if routed:
            resp2 = complete(
                prompt.text,
                stage2_provider,
                ledger,
                temperature=cfg.temperature,
                cache=cache,
                tags=tags,
                sleep=sleep,
            )
            s2_pt, s2_ct = resp2.prompt_tokens, resp2.completion_tokens
            try:
                d2 = parse_decision(resp2.text, expects_confidence=True)
                final = d2.label
            except UnparseableResponse:
                final = EXCLUDE
                unparsed_final = True
        else:
            final = d1.label
        return ScreeningResult(
            record_id=record.id,
            stage1=d1,
            routed=routed,
            stage2=d2,
            final=final,
            stage1_prompt_tokens=resp1.prompt_tokens,
            stage1_completion_tokens=resp1.completion_tokens,
            stage2_prompt_tokens=s2_pt,
            stage2_completion_tokens=s2_ct,
            unparsed_final=unparsed_final,
        )

    results: list[ScreeningResult] = []
    failed: list[tuple[str, str]] = []
    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool_exec:
        futures = {r.id: pool_exec.submit(screen_one, r) for r in dataset.records}
        for rid, fut in futures.items():
            try:
                results.append(fut.result())
            except ProviderError as exc:
                failed.append((rid, str(exc)))
    if failures is not None:
        failures.extend(failed)
    if len(dataset) > 0 and len(failed) / len(dataset) > 0.10:
        raise RunError(
            f"{len(failed)} of {len(dataset)} records failed "
            f"({len(failed) / len(dataset):.0%}); first: {failed[0]}"
        )
    results.sort(key=lambda r: r.record_id)
    return results, ledger


def run_single_stage(
    dataset: ReviewDataset,
    strategy: Strategy,
    provider,
    criteria: str,
    pricing: ModelPricing = DEFAULT_STAGE1_PRICING,
    seed: int = 0,
    temperature: float = 0.0,
    parallelism: int = DEFAULT_PARALLELISM,
    cache: ResponseCache | None = None,
    failures: list | None = None,
    sleep=time.sleep,
) -> tuple[list[ScreeningResult], CostLedger]:
    """Baseline runs: one model, no routing, no confidence field.

    The static few-shot strategy draws its fixed demonstration set here,
    seeded, shared by every target in the dataset.
    """
    if strategy is Strategy.DYNAMIC_FEW_SHOT:
        raise ValueError("use run_two_stage for the confidence strategy")
    ledger = CostLedger({provider.model_id: pricing})
    shared_instances = None
    if strategy is Strategy.FEW_SHOT:
        shared_instances = static_instances(dataset, seed)

    def screen_one(record: StudyRecord) -> ScreeningResult:
        prompt = render(strategy, criteria, record, shared_instances)
        resp = complete(
            prompt.text,
            provider,
            ledger,
            temperature=temperature,
            cache=cache,
            tags={"record_id": record.id},
            sleep=sleep,
        )
        try:
            decision = parse_decision(resp.text, expects_confidence=False)
            final = decision.label
            unparsed = False
        except UnparseableResponse:
            decision = None
            final = EXCLUDE
            unparsed = True
        return ScreeningResult(
            record_id=record.id,
            stage1=decision,
            routed=False,
            stage2=None,
            final=final,
            stage1_prompt_tokens=resp.prompt_tokens,
            stage1_completion_tokens=resp.completion_tokens,
            unparsed_final=unparsed,
        )

    results: list[ScreeningResult] = []
    failed: list[tuple[str, str]] = []
    with ThreadPoolExecutor(max_workers=parallelism) as pool_exec:
        futures = {r.id: pool_exec.submit(screen_one, r) for r in dataset.records}
        for rid, fut in futures.items():
            try:
                results.append(fut.result())
            except ProviderError as exc:
                failed.append((rid, str(exc)))
    if failures is not None:
        failures.extend(failed)
    if len(dataset) > 0 and len(failed) / len(dataset) > 0.10:
        raise RunError(
            f"{len(failed)} of {len(dataset)} records failed "
            f"({len(failed) / len(dataset):.0%}); first: {failed[0]}"
        )
    results.sort(key=lambda r: r.record_id)
    return results, ledger


def routed_ratio(results: list[ScreeningResult]) -> float:
    if not results:
        raise ValueError("no results")
    return sum(1 for r in results if r.routed) / len(results)


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    f1: float
    routed_ratio: float
    routed_ids: tuple[str, ...]


def sweep_thresholds(
    dataset: ReviewDataset,
    pool: ExemplarPool,
    clustering: Clustering,
    points: dict[str, Point2D],
    cfg: RunConfig,
    stage1_provider,
    stage2_provider,
    criteria: str,
    thresholds: list[float],
    cache: ResponseCache | None = None,
) -> list[SweepPoint]:
    """Re-run the cascade per threshold against a shared response cache.

    Stage-1 answers replay from cache after the first pass, and stage-2
    prompts coincide across thresholds, so a sweep costs little more
    than a single run.  Needs gold labels to score F1.
    """
    from .evaluation import confusion, metrics

    for th in thresholds:
        if not 0.0 <= th <= 1.0:
            raise ValueError(f"threshold {th} outside [0,1]")
    gold = {r.id: r.gold_label for r in dataset.records}
    if any(v is None for v in gold.values()):
        raise ValueError("threshold sweep needs gold labels on every record")
    if cache is None:
        cache = ResponseCache()
    out = []
    for th in thresholds:
        run_cfg = replace(cfg, threshold=th)
        results, _ = run_two_stage(
            dataset,
            pool,
            clustering,
            points,
            run_cfg,
            stage1_provider,
            stage2_provider,
            criteria,
            cache=cache,
        )
        finals = {r.record_id: r.final for r in results}
        m = metrics(confusion(finals, gold))
        routed = tuple(sorted(r.record_id for r in results if r.routed))
        out.append(
            SweepPoint(
                threshold=th,
                f1=m["f1"],
                routed_ratio=routed_ratio(results),
                routed_ids=routed,
            )
        )
    return out


def write_results_jsonl(results: list[ScreeningResult], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_results_jsonl(path: str) -> list[ScreeningResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(ScreeningResult.from_dict(json.loads(line)))
    return out
