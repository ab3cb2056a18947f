"""Axis-aligned estimation window and its uniform sample grids."""
from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass(frozen=True)
class Window:
    """Box ``center +/- half_width`` split into ``partitions`` sub-boxes per
    active dimension, each sampled at ``samples_per_partition`` uniform points
    (endpoints included).
    """

    center: np.ndarray
    half_width: np.ndarray
    partitions: int = 8
    samples_per_partition: int = 9

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float)).copy()
        hw = np.asarray(self.half_width, dtype=float)
        hw = np.broadcast_to(hw, c.shape).copy()
        if np.any(~np.isfinite(c)) or np.any(~np.isfinite(hw)):
            raise ValueError("window center and half-width must be finite")
        if np.any(hw <= 0):
            raise ValueError(f"half_width must be positive, got {hw}")
        if int(self.partitions) < 1:
            raise ValueError("partitions must be >= 1")
        if int(self.samples_per_partition) < 3:
            raise ValueError("samples_per_partition must be >= 3")
        c.setflags(write=False)
        hw.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_width", hw)
        object.__setattr__(self, "partitions", int(self.partitions))
        object.__setattr__(self, "samples_per_partition", int(self.samples_per_partition))

    @property
    def dim(self):
        return self.center.shape[0]

    @property
    def lower(self):
        return self.center - self.half_width

    @property
    def upper(self):
        return self.center + self.half_width

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def recentered(self, center):
        return Window(center, self.half_width, self.partitions, self.samples_per_partition)

    def axis_samples(self, d):
        """Uniform samples along dimension ``d``: every sub-box's grid, shared
        endpoints merged.  ``partitions*(samples_per_partition-1)+1`` points."""
        count = self.partitions * (self.samples_per_partition - 1) + 1
        return np.linspace(self.lower[d], self.upper[d], count)

    def spacing(self):
        return 2.0 * self.half_width / (self.partitions * (self.samples_per_partition - 1))

    def sample_grid(self, dims=None):
        """Tensor grid over ``dims`` (default: all); other coordinates sit at
        the center.  Shape ``(P, n)``."""
        dims = range(self.dim) if dims is None else dims
        return _tensor_grid(self.center, {d: self.axis_samples(d) for d in dims})

    def sub_boxes(self, dims):
        """Sub-boxes ``(lo, hi)`` partitioning the window along ``dims``,
        in lexicographic partition order.  Inactive dimensions span the
        whole window."""
        dims = list(dims)
        edges = {d: np.linspace(self.lower[d], self.upper[d], self.partitions + 1) for d in dims}
        boxes = []
        for combo in product(range(self.partitions), repeat=len(dims)):
            lo, hi = self.lower.copy(), self.upper.copy()
            for d, k in zip(dims, combo):
                lo[d], hi[d] = edges[d][k], edges[d][k + 1]
            boxes.append((lo, hi))
        return boxes

    def box_samples(self, lo, hi, dims):
        """Sample grid of one sub-box along ``dims``."""
        axes = {d: np.linspace(lo[d], hi[d], self.samples_per_partition) for d in dims}
        return _tensor_grid(self.center, axes)

    def box_centers(self, dims):
        return np.array([0.5 * (lo + hi) for lo, hi in self.sub_boxes(dims)])


def _tensor_grid(center, axes):
    n = center.shape[0]
    dims = sorted(axes)
    if not dims:
        return center[None, :].copy()
    mesh = np.meshgrid(*[axes[d] for d in dims], indexing="ij")
    pts = np.tile(center, (mesh[0].size, 1))
    for d, m in zip(dims, mesh):
        pts[:, d] = m.ravel()
    assert pts.shape[1] == n
    return pts
