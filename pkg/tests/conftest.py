from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

from dfscreen import synth
from dfscreen.clustering import kmeans
from dfscreen.embedding import EmbeddingClient, EmbeddingProviderConfig
from dfscreen.exemplar_pool import build_pool
from dfscreen.projection import project_2d


def build_pipeline(dataset, k, seed=0, dim=32):
    """Embed, project, cluster, and pool a labeled dataset for tests."""
    ids = [r.id for r in dataset.records]
    client = EmbeddingClient(EmbeddingProviderConfig(kind="hashed_tf", dim=dim))
    vectors = client.embed_batch([r.text for r in dataset.records], ids)
    points = project_2d(ids, vectors, method="pca")
    clustering = kmeans(points, k, seed)
    pool = build_pool(dataset, clustering, points)
    return points, clustering, pool


@pytest.fixture
def small_dataset():
    return synth.synth_review("SMALL", 60, 15, k=4, seed=11)


@pytest.fixture
def small_pipeline(small_dataset):
    points, clustering, pool = build_pipeline(small_dataset, k=4, seed=3)
    return small_dataset, points, clustering, pool
