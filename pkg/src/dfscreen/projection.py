"""Reduction of embedding vectors to two dimensions.

The default route is exact PCA: covariance with the 1/(n-1) divisor,
eigendecomposition by cyclic Jacobi rotations, top two components.
Jacobi is slower than a LAPACK call but has no backend variation, so the
same input bytes give the same projected coordinates on every machine.
An import route loads coordinates computed elsewhere (e.g. UMAP run in a
notebook) from JSONL.
"""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np


class ProjectionError(ValueError):
    pass


class DegenerateDataError(ProjectionError):
    """Raised when the input has no usable spread to project."""


class Point2D(NamedTuple):
    x: float
    y: float


def jacobi_eigh(
    matrix: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of a symmetric matrix via cyclic Jacobi.

    Returns (values, vectors) with vectors in columns, unsorted. Iterates
    sweeps over the upper triangle until every off-diagonal magnitude is
    at or below ``tol``.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ProjectionError(f"matrix must be square, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12):
        raise ProjectionError("matrix must be symmetric")
    v = np.eye(n)
    if n == 1:
        return np.array([a[0, 0]]), v
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(a[p, q]))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) <= tol:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = (1.0 if theta >= 0 else -1.0) / (
                    abs(theta) + np.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    return np.diag(a).copy(), v


def _top_components(cov: np.ndarray, count: int) -> np.ndarray:
    values, vectors = jacobi_eigh(cov)
    # Ties in eigenvalue fall back to the original axis order so the
    # projection never depends on convergence accidents.
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    chosen = []
    for idx in order[:count]:
        vec = vectors[:, idx].copy()
        pivot = int(np.argmax(np.abs(vec)))
        if vec[pivot] < 0:
            vec = -vec
        chosen.append(vec)
    return np.column_stack(chosen)


def project_pca(vectors: list[np.ndarray]) -> list[Point2D]:
    """Exact 2-D PCA of the given vectors, in input order."""
    if len(vectors) < 3:
        raise DegenerateDataError(
            f"degenerate data: need at least 3 vectors, got {len(vectors)}"
        )
    x = np.asarray(vectors, dtype=np.float64)
    centered = x - x.mean(axis=0)
    if not np.any(np.abs(centered) > 0):
        raise DegenerateDataError("degenerate data: all vectors identical")
    cov = centered.T @ centered / (x.shape[0] - 1)
    components = _top_components(cov, 2)
    projected = centered @ components
    return [Point2D(float(px), float(py)) for px, py in projected]


def project_2d(
    ids: list[str],
    vectors: list[np.ndarray] | None = None,
    method: str = "pca",
    import_path: str | None = None,
) -> dict[str, Point2D]:
    """Map record ids to 2-D points, either by PCA or from a file."""
    if method == "pca":
        if vectors is None:
            raise ProjectionError("pca method needs vectors")
        if len(ids) != len(vectors):
            raise ProjectionError("ids and vectors length mismatch")
        points = project_pca(vectors)
        return dict(zip(ids, points))
    if method == "import":
        if import_path is None:
            raise ProjectionError("import method needs import_path")
        table = read_points_jsonl(import_path)
        missing = [rid for rid in ids if rid not in table]
        if missing:
            raise ProjectionError(
                f"no imported point for {len(missing)} record(s), "
                f"first missing: {missing[0]!r}"
            )
        return {rid: table[rid] for rid in ids}
    raise ProjectionError(f"unknown projection method {method!r}")


def write_points_jsonl(points: dict[str, Point2D], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rid in sorted(points):
            p = points[rid]
            fh.write(json.dumps({"id": rid, "x": p.x, "y": p.y}) + "\n")


def read_points_jsonl(path: str) -> dict[str, Point2D]:
    table: dict[str, Point2D] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                table[str(row["id"])] = Point2D(float(row["x"]), float(row["y"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ProjectionError(f"{path}:{lineno}: bad point row: {exc}") from None
    return table
