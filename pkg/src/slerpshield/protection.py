"""The protection transform: key sampling, group-wise slerp, feature dropout.

Enrollment rotates each group of a template toward the matching group of a
random key template by a fraction alpha of their included angle, then zeroes a
ratio beta of coordinates per group and re-normalizes what is kept. The key,
mask, and weights are stored alongside the protected vector so queries can be
pushed through the identical transform.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetTooLarge, DegenerateAngle, InfeasibleBudget, ZeroGroup
from .templates import GroupLayout, GroupWeights, Template, group_normalize

DROPOUT_MODES = ("random", "weighted")

# Below this, sin(theta) gives no usable rotation plane.
_SIN_EPS = 1e-9
# |cos| this close to 1 means (anti)parallel up to float drift: arccos near +-1
# loses half the mantissa (sin(theta) ~ 1e-8 at dot = 1 - 2e-16), so the sine
# threshold alone would wave through pairs whose coefficients cancel
# catastrophically.
_COS_DEGEN = 1.0 - 1e-12

# Enrollment may redraw a degenerate key this many times before giving up.
_MAX_KEY_RESAMPLES = 8


def _floor_budget(x: float) -> int:
    # floor() with a tiny nudge so 0.3*16 == 4.8 (stored as 4.799999...) still
    # floors to 4 while 0.1*30 == 2.9999999999999996 floors to 3.
    return int(np.floor(x + 1e-9))


@dataclass(frozen=True)
class ProtectionParams:
    """Transform configuration: rotation degree, dropout ratio, layout, mode."""

    alpha: float
    beta: float
    layout: GroupLayout
    dropout_mode: str = "random"
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if self.dropout_mode not in DROPOUT_MODES:
            raise ValueError(f"dropout_mode must be one of {DROPOUT_MODES}")
        if _floor_budget(self.beta * self.layout.group_dim) > self.layout.group_dim - 1:
            raise ValueError("dropout would empty a group")

    def fingerprint(self) -> str:
        """Hash identifying the transform (seed excluded: it varies per record)."""
        text = (
            f"v1|a={self.alpha!r}|b={self.beta!r}|d={self.layout.d}"
            f"|m={self.layout.m}|mode={self.dropout_mode}"
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class KeyTemplate:
    """Per-sample random unit vector (group-wise) the template is rotated toward."""

    values: np.ndarray
    layout: GroupLayout


@dataclass(frozen=True, eq=False)
class DropoutMask:
    """Which coordinates survive dropout, plus per-group drop counts."""

    kept: np.ndarray
    per_group_drop_counts: np.ndarray
    layout: GroupLayout

    def __post_init__(self):
        kept = np.asarray(self.kept, dtype=bool)
        counts = np.asarray(self.per_group_drop_counts, dtype=np.int64)
        object.__setattr__(self, "kept", kept)
        object.__setattr__(self, "per_group_drop_counts", counts)
        dropped_per_group = np.sum(~kept.reshape(self.layout.m, -1), axis=1)
        if not np.array_equal(dropped_per_group, counts):
            raise ValueError("mask rows disagree with per_group_drop_counts")

    @classmethod
    def all_kept(cls, layout: GroupLayout) -> "DropoutMask":
        return cls(np.ones(layout.d, dtype=bool), np.zeros(layout.m, dtype=np.int64), layout)


@dataclass(frozen=True, eq=False)
class ProtectedTemplate:
    """Rotated, masked, group-renormalized template: the shareable form."""

    values: np.ndarray
    mask: DropoutMask
    weights: GroupWeights
    layout: GroupLayout
    params_fingerprint: str


def sample_key(layout: GroupLayout, rng_seed) -> KeyTemplate:
    """Draw a key template: i.i.d. standard normal coordinates, group-normalized.

    ``rng_seed`` may be an int or a numpy Generator; fixed ints reproduce the
    same key.
    """
    rng = np.random.default_rng(rng_seed)
    raw = rng.standard_normal(layout.d)
    t = group_normalize(raw, layout)
    return KeyTemplate(t.values, layout)


def slerp(t: np.ndarray, k: np.ndarray, alpha: float) -> np.ndarray:
    """Constant-speed geodesic interpolation between unit vectors t and k.

    Returns the unit vector at fraction alpha of the included angle from t
    toward k. Raises DegenerateAngle when the pair is (anti)parallel, since
    infinitely many geodesics connect such points.
    """
    t = np.asarray(t, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    cos_theta = float(np.clip(np.dot(t, k), -1.0, 1.0))
    theta = float(np.arccos(cos_theta))
    sin_theta = np.sin(theta)
    if sin_theta < _SIN_EPS or abs(cos_theta) > _COS_DEGEN:
        raise DegenerateAngle(f"sin(theta)={sin_theta:.3e}; resample the key")
    ct = np.sin((1.0 - alpha) * theta) / sin_theta
    ck = np.sin(alpha * theta) / sin_theta
    return ct * t + ck * k


def group_slerp(t: Template, k: KeyTemplate, alpha: float) -> Template:
    """Apply slerp independently per group, each with its own included angle."""
    layout = t.layout
    if k.layout != layout:
        raise ValueError(f"layouts differ: {layout} vs {k.layout}")
    rt = t.groups()
    rk = layout.split(k.values)
    cos_theta = np.clip(np.einsum("ij,ij->i", rt, rk), -1.0, 1.0)
    theta = np.arccos(cos_theta)
    sin_theta = np.sin(theta)
    degenerate = (sin_theta < _SIN_EPS) | (np.abs(cos_theta) > _COS_DEGEN)
    if np.any(degenerate):
        bad = int(np.argmax(degenerate))
        raise DegenerateAngle(
            f"group {bad} has sin(theta)={sin_theta[bad]:.3e}", group_index=bad
        )
    ct = np.sin((1.0 - alpha) * theta) / sin_theta
    ck = np.sin(alpha * theta) / sin_theta
    rotated = ct[:, None] * rt + ck[:, None] * rk
    return Template(rotated.reshape(layout.d), layout)


def _mask_from_counts(layout: GroupLayout, counts: np.ndarray, rng) -> DropoutMask:
    """Drop counts[i] uniformly chosen coordinates within each group."""
    counts = np.asarray(counts, dtype=np.int64)
    # Rank coordinates of each group in a random order; the first counts[i]
    # ranks are dropped. One argsort pair replaces a per-group choice loop.
    u = rng.random((layout.m, layout.group_dim))
    ranks = np.argsort(np.argsort(u, axis=1), axis=1)
    kept = ranks >= counts[:, None]
    return DropoutMask(kept.reshape(layout.d), counts, layout)


def random_dropout_mask(layout: GroupLayout, beta: float, rng_seed) -> DropoutMask:
    """Every group drops exactly floor(beta * group_dim) coordinates."""
    drop = _floor_budget(beta * layout.group_dim)
    if drop > layout.group_dim - 1:
        raise BudgetTooLarge(
            f"dropping {drop} of {layout.group_dim} coordinates empties the group"
        )
    rng = np.random.default_rng(rng_seed)
    counts = np.full(layout.m, drop, dtype=np.int64)
    return _mask_from_counts(layout, counts, rng)


def weighted_dropout_counts(
    weights: GroupWeights, layout: GroupLayout, beta: float
) -> np.ndarray:
    """Split the total budget floor(beta * d) across groups, fewer drops for
    higher weight.

    Shares are proportional to (1 - w_i), rounded by largest remainder so the
    counts sum exactly to the budget, and capped at group_dim - 1; excess from
    capped groups is redistributed over the rest. Ties in weight break toward
    lower group index dropping more.
    """
    if weights.m != layout.m:
        raise ValueError(f"weights cover {weights.m} groups, layout has {layout.m}")
    budget = _floor_budget(beta * layout.d)
    cap = layout.group_dim - 1
    if budget > layout.m * cap:
        raise InfeasibleBudget(
            f"budget {budget} exceeds capacity {layout.m * cap}"
        )

    counts = np.zeros(layout.m, dtype=np.int64)
    active = np.ones(layout.m, dtype=bool)
    remaining = budget
    q = 1.0 - weights.w

    while remaining > 0:
        idx = np.flatnonzero(active)
        q_act = q[idx]
        total_q = float(q_act.sum())
        if total_q < 1e-12:
            shares = np.full(idx.size, remaining / idx.size)
        else:
            shares = remaining * q_act / total_q
        over = shares > cap
        if np.any(over):
            counts[idx[over]] = cap
            active[idx[over]] = False
            remaining -= cap * int(np.count_nonzero(over))
            continue
        base = np.floor(shares).astype(np.int64)
        leftover = remaining - int(base.sum())
        # Hand the leftover units out by largest fractional share; equal
        # fractions go to the lower index first (it drops more).
        order = np.lexsort((idx, -(shares - base)))
        for j in order[:leftover]:
            base[j] += 1
        counts[idx] = base
        remaining = 0

    return counts


def _apply_mask_and_renormalize(rotated: Template, mask: DropoutMask) -> np.ndarray:
    """Zero dropped coordinates and rescale each group's kept part to unit norm."""
    layout = rotated.layout
    masked = rotated.values * mask.kept
    rows = masked.reshape(layout.m, layout.group_dim)
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms < 1e-12):
        bad = int(np.argmin(norms))
        raise ZeroGroup(f"group {bad} lost all its mass to dropout")
    return (rows / norms[:, None]).reshape(layout.d)


def sample_mask(
    params: ProtectionParams, weights: GroupWeights | None = None, rng_seed=None
) -> DropoutMask:
    """Draw the dropout mask params prescribe: random mode drops the same count
    everywhere, weighted mode allocates the global budget by group weight."""
    layout = params.layout
    if weights is None:
        weights = GroupWeights.uniform(layout.m)
    rng = np.random.default_rng(params.rng_seed if rng_seed is None else rng_seed)
    if params.dropout_mode == "weighted":
        counts = weighted_dropout_counts(weights, layout, params.beta)
        return _mask_from_counts(layout, counts, rng)
    return random_dropout_mask(layout, params.beta, rng)


def protect(
    t: Template,
    params: ProtectionParams,
    weights: GroupWeights | None = None,
    rng_seed=None,
) -> tuple[ProtectedTemplate, KeyTemplate]:
    """Enroll a template: sample a key, rotate toward it, drop out, renormalize.

    A degenerate (anti)parallel group triggers a key redraw, up to 8 times;
    queries against the resulting record must use :func:`protect_query` with
    the returned key and the record's mask.
    """
    layout = t.layout
    if layout != params.layout:
        raise ValueError(f"template layout {layout} differs from params {params.layout}")
    if weights is None:
        weights = GroupWeights.uniform(layout.m)
    rng = np.random.default_rng(params.rng_seed if rng_seed is None else rng_seed)

    rotated = None
    key = None
    for _ in range(1 + _MAX_KEY_RESAMPLES):
        key = sample_key(layout, rng)
        try:
            rotated = group_slerp(t, key, params.alpha)
            break
        except DegenerateAngle:
            continue
    if rotated is None:
        raise DegenerateAngle(
            f"key degenerate after {_MAX_KEY_RESAMPLES} resamples"
        )

    mask = sample_mask(params, weights, rng)
    values = _apply_mask_and_renormalize(rotated, mask)
    protected = ProtectedTemplate(values, mask, weights, layout, params.fingerprint())
    return protected, key


def protect_query(
    t_q: Template,
    k: KeyTemplate,
    mask: DropoutMask,
    params: ProtectionParams,
    weights: GroupWeights | None = None,
) -> ProtectedTemplate:
    """Push a query through the exact transform of an enrolled record.

    Deterministic given (t_q, k, mask). A degenerate angle is an error here:
    the enrolled key is fixed, so there is nothing to resample.
    """
    layout = t_q.layout
    if layout != params.layout or k.layout != layout or mask.layout != layout:
        raise ValueError("query, key, mask, and params disagree on layout")
    if weights is None:
        weights = GroupWeights.uniform(layout.m)
    rotated = group_slerp(t_q, k, params.alpha)
    values = _apply_mask_and_renormalize(rotated, mask)
    return ProtectedTemplate(values, mask, weights, layout, params.fingerprint())
