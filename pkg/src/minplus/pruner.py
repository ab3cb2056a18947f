"""Cardinality control for min-plus value sets.

``ClusterPrune`` groups members by the location of their windowed argmin
(k-means) and keeps the lowest-valued member of each group, so separated
modes of the value function survive.  ``ValuePrune`` keeps the globally
lowest-valued members and is provided as the baseline.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .quadform import PD_TOL, box_argmin, windowed_argmin

log = logging.getLogger(__name__)

CLUSTER = "cluster"
VALUE = "value"


@dataclass(frozen=True)
class PruneConfig:
    max_members: int = 12
    strategy: str = CLUSTER
    seed: int = 0
    max_iterations: int = 100

    def __post_init__(self):
        if int(self.max_members) < 1:
            raise ValueError("max_members must be >= 1")
        if self.strategy not in (CLUSTER, VALUE):
            raise ValueError(f"strategy must be {CLUSTER!r} or {VALUE!r}")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be >= 1")


class CatalogEntry(NamedTuple):
    index: int
    point: np.ndarray
    value: float


class Catalog(NamedTuple):
    points: np.ndarray  # (M, n)
    values: np.ndarray  # (M,)

    def entries(self):
        return [CatalogEntry(i, p, float(v)) for i, (p, v) in enumerate(zip(self.points, self.values))]

    def best(self):
        """Index of the lowest value, ties to the lowest index."""
        return int(np.argmin(self.values))


class Clustering(NamedTuple):
    labels: np.ndarray
    centers: np.ndarray
    k: int
    iterations: int


def argmin_catalog(s, w):
    """Windowed argmin and value of every member, in member order."""
    mats = s.matrices
    n = s.dim
    q11, q12, q22 = mats[:, :n, :n], mats[:, :n, n], mats[:, n, n]
    points = np.empty((len(s), n))
    values = np.empty(len(s))
    lam = np.linalg.eigvalsh(q11)[:, 0]
    convex = lam > PD_TOL
    lo, hi = w.lower, w.upper
    done = np.zeros(len(s), dtype=bool)
    if convex.any():
        idx = np.flatnonzero(convex)
        verts = -np.linalg.solve(q11[idx], q12[idx][..., None])[..., 0]
        outside = ~np.all((verts >= lo) & (verts <= hi), axis=1)
        if outside.any():
            verts[outside] = box_argmin(q11[idx[outside]], q12[idx[outside]], lo, hi)
        points[idx] = verts
        values[idx] = 0.5 * (
            np.einsum("pi,pij,pj->p", verts, q11[idx], verts)
            + 2.0 * np.einsum("pi,pi->p", q12[idx], verts)
            + q22[idx]
        )
        done[idx] = True
    for i in np.flatnonzero(~done):
        x, v = windowed_argmin(s[i], w)
        points[i], values[i] = x, v
    return Catalog(points, values)


def _kmeans_pp(points, k, rng):
    """D^2-weighted seeding; first center uniform."""
    P = points.shape[0]
    centers = [points[rng.integers(P)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            break
        i = int(rng.choice(P, p=d2 / total))
        centers.append(points[i])
        d2 = np.minimum(d2, ((points - points[i]) ** 2).sum(axis=1))
    return np.array(centers)


def cluster(points, k, seed=0, max_iterations=100):
    """Lloyd's k-means with k-means++ seeding from ``seed``.

    ``k`` is reduced to the number of distinct points when larger.
    Deterministic for fixed ``(points, k, seed)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n_distinct = np.unique(points, axis=0).shape[0]
    if k > n_distinct:
        log.info("k reduced from %d to %d distinct points", k, n_distinct)
        k = n_distinct
    if k <= 1:
        return Clustering(np.zeros(points.shape[0], dtype=np.int64), points.mean(axis=0, keepdims=True), 1, 0)
    rng = np.random.default_rng(seed)
    init = _kmeans_pp(points, k, rng)
    labels, centers, iterations = _kernels.lloyd(points, init, max_iterations)
    return Clustering(np.asarray(labels, dtype=np.int64), centers, init.shape[0], int(iterations))


def _best_per_cluster(labels, values):
    keep = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        keep.append(int(members[np.argmin(values[members])]))
    return sorted(keep)


def survivors(catalog, cfg):
    """Indices retained by ``cfg`` given an argmin catalog, ascending."""
    M = catalog.values.shape[0]
    P = int(cfg.max_members)
    if M <= P:
        return list(range(M))
    if cfg.strategy == VALUE:
        order = np.argsort(catalog.values, kind="stable")
        return sorted(int(i) for i in order[:P])
    cl = cluster(catalog.points, P, cfg.seed, cfg.max_iterations)
    return _best_per_cluster(cl.labels, catalog.values)


def prune(s, w, cfg, catalog=None):
    """Project ``s`` onto at most ``cfg.max_members`` of its own members,
    keeping their original relative order."""
    if len(s) <= cfg.max_members:
        return s
    if catalog is None:
        catalog = argmin_catalog(s, w)
    return s.subset(survivors(catalog, cfg))


__all__ = [
    "CLUSTER",
    "VALUE",
    "PruneConfig",
    "Catalog",
    "CatalogEntry",
    "Clustering",
    "argmin_catalog",
    "cluster",
    "survivors",
    "prune",
]
