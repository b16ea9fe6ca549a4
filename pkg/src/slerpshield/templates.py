"""Templates, group layouts, and the spherical primitives everything else builds on.

A template is a length-d feature vector treated as a point on a hypersphere.
Under a group layout it is split into m contiguous equal slices, each living on
its own (d/m)-dimensional unit sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, LayoutMismatch, ZeroGroup

# Dot products drift slightly outside [-1, 1] for near-identical vectors;
# arccos would raise on them, so every cosine is clamped before use.
_COS_LO, _COS_HI = -1.0, 1.0


@dataclass(frozen=True)
class GroupLayout:
    """Contiguous equal split of a d-dimensional vector into m groups.

    Group i covers indices [i * group_dim, (i + 1) * group_dim). A group of
    dimension 1 is degenerate (normalization forces +-1), so group_dim >= 2.
    """

    d: int
    m: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"group count must be >= 1, got {self.m}")
        if self.d % self.m != 0:
            raise ValueError(f"d={self.d} is not divisible by m={self.m}")
        if self.group_dim < 2:
            raise ValueError(
                f"group_dim={self.group_dim} is degenerate; need at least 2"
            )

    @property
    def group_dim(self) -> int:
        return self.d // self.m

    def split(self, values: np.ndarray) -> np.ndarray:
        """View a length-d vector as an (m, group_dim) matrix of group rows."""
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (self.d,):
            raise DimensionMismatch(f"expected length {self.d}, got {v.shape}")
        return v.reshape(self.m, self.group_dim)


@dataclass(frozen=True, eq=False)
class GroupWeights:
    """Nonnegative per-group weights summing to 1."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)
        if w.ndim != 1:
            raise ValueError("weights must be a 1-d vector")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @classmethod
    def uniform(cls, m: int) -> "GroupWeights":
        return cls(np.full(m, 1.0 / m))


@dataclass(frozen=True, eq=False)
class Template:
    """A feature vector together with its group layout.

    Constructed by :func:`group_normalize`; each group slice is then a unit
    vector up to floating-point drift.
    """

    values: np.ndarray
    layout: GroupLayout

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.shape != (self.layout.d,):
            raise DimensionMismatch(
                f"values have shape {v.shape}, layout expects ({self.layout.d},)"
            )

    def groups(self) -> np.ndarray:
        """(m, group_dim) view of the values."""
        return self.values.reshape(self.layout.m, self.layout.group_dim)


def group_normalize(v: np.ndarray, layout: GroupLayout) -> Template:
    """Normalize each contiguous group slice of v to unit norm.

    Raises ZeroGroup if any slice has norm below 1e-12 (direction undefined).
    """
    rows = layout.split(v).copy()
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms < 1e-12):
        bad = int(np.argmin(norms))
        raise ZeroGroup(f"group {bad} has norm {norms[bad]:.3e}")
    rows /= norms[:, None]
    return Template(rows.reshape(layout.d), layout)


def included_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in [0, pi] between two unit vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return float(np.arccos(np.clip(np.dot(a, b), _COS_LO, _COS_HI)))


def _group_cosines(a_values: np.ndarray, b_values: np.ndarray, layout: GroupLayout) -> np.ndarray:
    """Per-group cosine similarities, clamped into [-1, 1]."""
    ra = layout.split(a_values)
    rb = layout.split(b_values)
    dots = np.einsum("ij,ij->i", ra, rb)
    norms = np.linalg.norm(ra, axis=1) * np.linalg.norm(rb, axis=1)
    if np.any(norms < 1e-12):
        bad = int(np.argmin(norms))
        raise ZeroGroup(f"group {bad} has zero norm; cosine undefined")
    return np.clip(dots / norms, _COS_LO, _COS_HI)


def groupwise_similarity(a, b, weights: GroupWeights | None = None) -> float:
    """Weighted sum of per-group cosine similarities, in [-1, 1].

    ``a`` and ``b`` are templates (anything exposing .values and .layout).
    With uniform weights and m=1 this is plain cosine similarity.
    """
    if a.layout != b.layout:
        raise LayoutMismatch(f"layouts differ: {a.layout} vs {b.layout}")
    layout = a.layout
    if weights is None:
        weights = GroupWeights.uniform(layout.m)
    if weights.m != layout.m:
        raise LayoutMismatch(
            f"weights cover {weights.m} groups, layout has {layout.m}"
        )
    cosines = _group_cosines(a.values, b.values, layout)
    return float(np.dot(weights.w, cosines))
