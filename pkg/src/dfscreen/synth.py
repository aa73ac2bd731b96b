"""Synthetic screening corpora for benchmarks, demos, and tests.

Generates topic-structured title/abstract records (so hashed-TF
embeddings actually cluster), plus "raw" variants salted with unusable
and duplicate rows in known quantities for exercising curation.  A
small registry of benchmark review shapes drives both.

Run as a module to materialize a full demo workspace:

    python -m dfscreen.synth OUT_DIR [--seed N]
"""

from __future__ import annotations

import argparse
import json
import os
from dataclasses import dataclass

from .corpus import EXCLUDE, INCLUDE, ReviewDataset, StudyRecord, write_dataset_jsonl
from .rng import SplitMix64, derive_rng


@dataclass(frozen=True)
class ReviewShape:
    """Row/label counts a synthetic review should land on."""

    review_id: str
    stage: str
    retrieved: int
    retrieved_includes: int
    curated: int
    curated_includes: int
    k: int


BENCHMARK_REVIEWS = [
    ReviewShape("CD012233", "diagnosis", 472, 43, 429, 38, 5),
    ReviewShape("CD012768", "diagnosis", 131, 45, 119, 43, 3),
    ReviewShape("CD011977", "diagnosis", 1182, 297, 1117, 280, 8),
    ReviewShape("CD012069", "diagnosis", 251, 42, 247, 41, 4),
    ReviewShape("CD012551", "diagnosis", 316, 47, 307, 46, 4),
    ReviewShape("CD004414", "intervention", 195, 49, 192, 49, 3),
    ReviewShape("CD012661", "intervention", 3479, 320, 2897, 282, 10),
    ReviewShape("CD011431", "intervention", 591, 68, 546, 65, 5),
    ReviewShape("CD011420", "intervention", 336, 16, 303, 16, 4),
    ReviewShape("CD010772", "prognosis", 3367, 192, 3343, 192, 10),
]

K_OVERRIDES = {shape.review_id: shape.k for shape in BENCHMARK_REVIEWS}

_TOPIC_STEMS = [
    "cardiac",
    "oncologic",
    "neural",
    "renal",
    "hepatic",
    "pulmonary",
    "vascular",
    "immune",
    "metabolic",
    "skeletal",
]

_COMMON_WORDS = [
    "patients",
    "study",
    "clinical",
    "outcomes",
    "treatment",
    "analysis",
    "randomized",
    "cohort",
    "baseline",
    "followup",
    "risk",
    "assessment",
]

_SUFFIXES = ["", "itis", "oma", "pathy", "plasty", "gram", "scope", "cyte"]


def _topic_vocab(topic: int) -> list[str]:
    stem = _TOPIC_STEMS[topic % len(_TOPIC_STEMS)]
    return [stem + s for s in _SUFFIXES]


def _words(rng: SplitMix64, vocab: list[str], count: int) -> list[str]:
    return [vocab[rng.randrange(len(vocab))] for _ in range(count)]


def synth_review(
    review_id: str,
    n: int,
    n_includes: int,
    k: int = 4,
    seed: int = 0,
) -> ReviewDataset:
    """Fully labeled dataset of ``n`` records spread over ``k`` topics.

    Every title carries a unique marker token, so no two distinct
    records can collide under title deduplication.
    """
    if n_includes > n:
        raise ValueError(f"cannot place {n_includes} includes in {n} records")
    rng = derive_rng(seed, "review", review_id)
    include_at = set(rng.sample_indices(n, n_includes))
    records = []
    for i in range(n):
        topic = rng.randrange(k)
        vocab = _topic_vocab(topic)
        title_words = _words(rng, vocab, 4) + _words(rng, _COMMON_WORDS, 2)
        title = " ".join(title_words + [f"cohort{i}"]).capitalize()
        body = []
        for _ in range(30):
            src = vocab if rng.random() < 0.7 else _COMMON_WORDS
            body.append(src[rng.randrange(len(src))])
        abstract = " ".join(body).capitalize() + "."
        records.append(
            StudyRecord(
                id=f"{review_id}-{i:05d}",
                title=title,
                abstract=abstract,
                gold_label=INCLUDE if i in include_at else EXCLUDE,
                review_id=review_id,
            )
        )
    return ReviewDataset(review_id, records)


def synth_raw_review(shape: ReviewShape, seed: int = 0) -> ReviewDataset:
    """Raw dataset whose curation lands exactly on ``shape``'s counts.

    Starts from the curated core, then mixes in rows curation must
    remove: half with a blank abstract, half duplicating an earlier row
    (same id, or same title up to case and spacing).  Include labels on
    the junk rows make up the retrieved/curated include gap.
    """
    core = synth_review(
        shape.review_id, shape.curated, shape.curated_includes, k=shape.k, seed=seed
    )
    removed = shape.retrieved - shape.curated
    removed_inc = shape.retrieved_includes - shape.curated_includes
    if removed < 0 or removed_inc < 0 or removed_inc > removed:
        raise ValueError(f"inconsistent shape for {shape.review_id}")
    n_missing = removed // 2
    n_dup = removed - n_missing
    missing_inc = removed_inc // 2
    dup_inc = removed_inc - missing_inc
    if dup_inc > n_dup or missing_inc > n_missing:
        # Tiny removal budgets can't split evenly; shift the labels over.
        dup_inc = min(dup_inc, n_dup)
        missing_inc = removed_inc - dup_inc

    rng = derive_rng(seed, "raw", shape.review_id)
    rows = list(core.records)

    for i in range(n_missing):
        label = INCLUDE if i < missing_inc else EXCLUDE
        rec = StudyRecord(
            id=f"{shape.review_id}-missing-{i:04d}",
            title=f"Unindexed report {i}" if rng.random() < 0.5 else "",
            abstract="",
            gold_label=label,
            review_id=shape.review_id,
        )
        rows.insert(rng.randrange(len(rows) + 1), rec)

    core_includes = [r for r in core.records if r.gold_label == INCLUDE]
    core_excludes = [r for r in core.records if r.gold_label == EXCLUDE]
    for i in range(n_dup):
        wants_include = i < dup_inc
        bank = core_includes if wants_include else core_excludes
        src = bank[rng.randrange(len(bank))]
        if i % 2 == 0:
            # Same id again; content may drift, the id alone damns it.
            dup = StudyRecord(
                id=src.id,
                title=src.title,
                abstract=src.abstract + " Duplicate entry.",
                gold_label=src.gold_label,
                review_id=shape.review_id,
            )
        else:
            # Fresh id but the title differs only in case and spacing.
            dup = StudyRecord(
                id=f"{shape.review_id}-dup-{i:04d}",
                title="  " + src.title.upper().replace(" ", "  "),
                abstract=src.abstract,
                gold_label=src.gold_label,
                review_id=shape.review_id,
            )
        src_pos = next(j for j, r in enumerate(rows) if r.id == src.id)
        insert_at = src_pos + 1 + rng.randrange(len(rows) - src_pos)
        rows.insert(insert_at, dup)

    return ReviewDataset(shape.review_id, rows)


def synth_criteria(review_id: str) -> str:
    """Plausible eligibility text; injected verbatim into prompts."""
    return (
        f"Include primary studies reporting original {review_id} cohort data "
        "with extractable outcomes in adult participants.\n"
        "Exclude editorials, conference abstracts, animal studies, case "
        "reports with fewer than 10 participants, and studies without "
        "outcome data."
    )


def write_workspace(out_dir: str, seed: int = 0) -> str:
    """Materialize raw datasets, criteria files, and a pipeline config.

    Returns the config path.  The config carries the per-review cluster
    overrides and screening defaults, ready for the command-line runner.
    """
    os.makedirs(out_dir, exist_ok=True)
    data_dir = os.path.join(out_dir, "data")
    os.makedirs(data_dir, exist_ok=True)
    reviews = {}
    for shape in BENCHMARK_REVIEWS:
        raw = synth_raw_review(shape, seed=seed)
        write_dataset_jsonl(
            raw, os.path.join(data_dir, f"{shape.review_id}_raw.jsonl")
        )
        with open(
            os.path.join(data_dir, f"{shape.review_id}_criteria.txt"),
            "w",
            encoding="utf-8",
        ) as fh:
            fh.write(synth_criteria(shape.review_id) + "\n")
        # Paths are stored relative to the config file so the workspace
        # can move wholesale.
        reviews[shape.review_id] = {
            "dataset": f"data/{shape.review_id}_raw.jsonl",
            "criteria": f"data/{shape.review_id}_criteria.txt",
            "k": shape.k,
        }
    config = {
        "reviews": reviews,
        "embedding": {"kind": "hashed_tf", "dim": 64},
        "projection": "pca",
        "strategy": "dfsl",
        "threshold": 0.9,
        "seed": seed,
        "stage1": {
            "model": "oracle-mini",
            "pricing": {"input_usd_per_mtok": 0.40, "output_usd_per_mtok": 1.60},
        },
        "stage2": {
            "model": "oracle-large",
            "pricing": {"input_usd_per_mtok": 2.00, "output_usd_per_mtok": 8.00},
        },
        "provider": {
            "kind": "oracle",
            "profile": {"acc_hi": 0.95, "acc_lo": 0.75, "p_hi": 0.87},
            "stage2_profile": {"acc_hi": 0.97, "acc_lo": 0.95, "p_hi": 0.95},
        },
        "cache_dir": "cache",
    }
    config_path = os.path.join(out_dir, "config.json")
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return config_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Generate a synthetic screening workspace."
    )
    parser.add_argument("out_dir", help="directory to create the workspace in")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    config_path = write_workspace(args.out_dir, seed=args.seed)
    print(f"wrote {config_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
