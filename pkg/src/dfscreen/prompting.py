"""Prompt strategies and rendering.

Four strategies share a common skeleton: a role statement, the review's
eligibility criteria, the target title and abstract, and an output cue.
The few-shot variants splice labeled demonstration instances in between;
the dynamic variant additionally asks for JSON with a confidence score.
Templates are module constants substituted with plain string replacement
so literal braces in the output-format block survive untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .corpus import EXCLUDE, INCLUDE, ReviewDataset, StudyRecord
from .rng import SplitMix64


class PromptError(ValueError):
    pass


class Strategy(str, Enum):
    ZERO_SHOT = "zs"
    CHAIN_OF_THOUGHT = "cot"
    FEW_SHOT = "fs"
    DYNAMIC_FEW_SHOT = "dfsl"

    @property
    def requires_instances(self) -> bool:
        return self in (Strategy.FEW_SHOT, Strategy.DYNAMIC_FEW_SHOT)

    @property
    def expects_confidence(self) -> bool:
        return self is Strategy.DYNAMIC_FEW_SHOT


ZERO_SHOT_TEMPLATE = """You are a reviewer conducting abstract screening for a systematic review. Your task is to determine whether the given title and abstract should be included or excluded based on the provided criteria.

Only return the result: include or exclude.

Criteria:
{criteria}

Title:
{title}

Abstract:
{abstract}

Output:
"""

CHAIN_OF_THOUGHT_TEMPLATE = """You are a reviewer conducting abstract screening for a systematic review. Your task is to determine whether the given title and abstract should be included or excluded based on the provided criteria. Think step by step.

Only return the result: include or exclude.

Criteria:
{criteria}

Title:
{title}

Abstract:
{abstract}

Output:
"""

FEW_SHOT_TEMPLATE = """You are a reviewer conducting abstract screening for a systematic review. Your task is to determine whether the given title and abstract should be included or excluded based on the provided criteria and examples.

Only return the result: include or exclude.

Criteria:
{criteria}

Instances:
{instances}

Title:
{title}

Abstract:
{abstract}

Output:
"""

DYNAMIC_FEW_SHOT_TEMPLATE = """You are a reviewer conducting abstract screening for a systematic review. Your task is to determine whether the given title and abstract should be included or excluded based on the provided criteria and examples. Think step by step.

Return the result in JSON format.

Criteria:
{criteria}

Instances:
{instances}

Title:
{title}

Abstract:
{abstract}

Output Format:
{
 "confidence": confidence_score (0 to 1),
 "decision": "include or exclude"
}

Output:
"""

_TEMPLATES = {
    Strategy.ZERO_SHOT: ZERO_SHOT_TEMPLATE,
    Strategy.CHAIN_OF_THOUGHT: CHAIN_OF_THOUGHT_TEMPLATE,
    Strategy.FEW_SHOT: FEW_SHOT_TEMPLATE,
    Strategy.DYNAMIC_FEW_SHOT: DYNAMIC_FEW_SHOT_TEMPLATE,
}


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    strategy: Strategy
    instance_ids: tuple[str, ...] = ()


def render_instances(instances: list[tuple[StudyRecord, str]]) -> str:
    blocks = []
    for record, label in instances:
        if label not in (INCLUDE, EXCLUDE):
            raise PromptError(
                f"instance {record.id!r} has no usable label: {label!r}"
            )
        blocks.append(
            f"Title: {record.title}\nAbstract: {record.abstract}\nDecision: {label}"
        )
    return "\n\n".join(blocks)


def render(
    strategy: Strategy,
    criteria: str,
    record: StudyRecord,
    instances: list[tuple[StudyRecord, str]] | None = None,
) -> RenderedPrompt:
    """Fill the strategy's template for one target record."""
    if strategy.requires_instances:
        if not instances:
            raise PromptError(f"strategy {strategy.value} needs instances")
    elif instances:
        raise PromptError(f"strategy {strategy.value} does not take instances")
    text = _TEMPLATES[strategy]
    text = text.replace("{criteria}", criteria)
    text = text.replace("{title}", record.title)
    text = text.replace("{abstract}", record.abstract)
    if strategy.requires_instances:
        text = text.replace("{instances}", render_instances(instances))
    ids = tuple(rec.id for rec, _ in instances) if instances else ()
    return RenderedPrompt(text=text, strategy=strategy, instance_ids=ids)


def static_instances(
    dataset: ReviewDataset, seed: int
) -> list[tuple[StudyRecord, str]]:
    """Fixed demonstration set for the static few-shot baseline.

    One include and two excludes drawn uniformly from the labeled
    records, the same for every target of the review.  Records are
    sorted by id before the draw so the result does not depend on
    input file order.
    """
    includes = sorted(
        (r for r in dataset.records if r.gold_label == INCLUDE), key=lambda r: r.id
    )
    excludes = sorted(
        (r for r in dataset.records if r.gold_label == EXCLUDE), key=lambda r: r.id
    )
    if len(includes) < 1 or len(excludes) < 2:
        raise PromptError(
            f"static few-shot needs 1 include and 2 excludes, have "
            f"{len(includes)} and {len(excludes)}"
        )
    rng = SplitMix64(seed)
    inc = includes[rng.randrange(len(includes))]
    i, j = rng.sample_indices(len(excludes), 2)
    return [(inc, INCLUDE), (excludes[i], EXCLUDE), (excludes[j], EXCLUDE)]
