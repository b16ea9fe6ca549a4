"""Red-team harness: recover a template from its protected form and key.

Knowing (p, k, alpha), the rotation is a linear system in the template's
coordinates once the original included angle theta is fixed, so theta is the
only genuinely nonlinear unknown. The attack runs a scalar Newton iteration on
theta: each guess yields a closed-form template estimate on the kept
coordinates (dropped ones are filled from the current random initialization),
and the residual is the angle self-consistency arccos(est . k) - theta. Failed
runs reinitialize and rerun; the rerun count is the attack's cost measure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .matching import EnrollmentRecord
from .protection import (
    DropoutMask,
    ProtectionParams,
    protect_query,
    random_dropout_mask,
    sample_key,
)
from .templates import GroupLayout, Template, group_normalize, included_angle

_FD_STEP = 1e-6
_THETA_LO = 1e-4
_THETA_HI = np.pi - 1e-4


@dataclass(frozen=True)
class NRConfig:
    max_iterations: int = 100
    residual_tolerance: float = 1e-6
    max_reruns: int = 10000
    init_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.residual_tolerance <= 0 or self.max_reruns < 1:
            raise ValueError("tolerance and max_reruns must be positive")


@dataclass(frozen=True, eq=False)
class AttackReport:
    """Outcome of one group inversion.

    ``delta_theta`` is |arccos(recovered . k) - true_angle| and is present only
    when the caller supplied the ground-truth angle.
    """

    reruns_used: int
    converged: bool
    recovered: np.ndarray | None = None
    theta_estimate: float | None = None
    delta_theta: float | None = None


@dataclass(frozen=True, eq=False)
class FullAttackReport:
    """Per-group inversions of a whole record, plus the combined cost estimate."""

    group_reports: list[AttackReport]
    converged: bool
    total_reruns: int
    product_cost: float
    recovered: np.ndarray | None = None


# A run only succeeds if the pre-normalization estimate is a unit vector:
# the kept coordinates are pinned by the linear system and cannot be rescaled,
# so a norm defect means the estimate does not actually solve the system
# (rescaling it would break the reconstruction identity on kept coordinates).
_NORM_TOL = 1e-6


def _newton_run(p_kept, k_kept, k_full, kept_idx, dropped_idx, alpha, rng, cfg, theta0):
    """One Newton attempt; returns (estimate, theta) or None on failure.

    The dropped coordinates keep the random direction drawn at initialization;
    their magnitude absorbs whatever norm the kept part leaves free, so the
    estimate is a unit vector whenever that is feasible. Failure covers
    exhausted iterations, a norm defect at the angle root, a step leaving
    (0, pi), and any non-finite intermediate.
    """
    est = np.empty(k_full.size)
    fill = rng.standard_normal(dropped_idx.size)
    fill_norm = np.linalg.norm(fill)
    if dropped_idx.size and fill_norm > 0:
        fill /= fill_norm
    theta = theta0

    def residual(th):
        s = np.sin(th)
        a = np.sin((1.0 - alpha) * th) / s
        b = np.sin(alpha * th) / s
        kept_est = (p_kept - b * k_kept) / a
        kept_sq = float(np.dot(kept_est, kept_est))
        est[kept_idx] = kept_est
        est[dropped_idx] = np.sqrt(max(1.0 - kept_sq, 0.0)) * fill
        nrm = np.linalg.norm(est)
        if nrm < 1e-12:
            return None, None, None
        unit = est / nrm
        f = float(np.arccos(np.clip(np.dot(unit, k_full), -1.0, 1.0))) - th
        return f, abs(nrm - 1.0), unit

    for _ in range(cfg.max_iterations):
        f, norm_err, unit = residual(theta)
        if f is None or not np.isfinite(f):
            return None
        if abs(f) < cfg.residual_tolerance:
            return (unit, theta) if norm_err < _NORM_TOL else None
        f_plus, _, _ = residual(theta + _FD_STEP)
        if f_plus is None or not np.isfinite(f_plus):
            return None
        deriv = (f_plus - f) / _FD_STEP
        if deriv == 0.0 or not np.isfinite(deriv):
            return None
        theta = theta - f / deriv
        if not (_THETA_LO < theta < _THETA_HI):
            return None
    return None


def nr_invert_group(
    p_group: np.ndarray,
    k_group: np.ndarray,
    alpha: float,
    mask_group: np.ndarray,
    cfg: NRConfig,
    true_angle: float | None = None,
) -> AttackReport:
    """Invert one protected group, rerunning with fresh initializations on failure.

    The stored values are pre-scaled by sqrt(kept_fraction) to undo the
    protocol's post-mask renormalization, whose scale is public knowledge in
    expectation. The first run seeds theta from the protected-to-key angle
    divided by (1 - alpha), which is exact without dropout; reruns draw both a
    new fill and a fresh uniform theta guess. Non-convergence after
    cfg.max_reruns is an expected outcome under dropout and is reported, not
    raised.
    """
    p_group = np.asarray(p_group, dtype=np.float64)
    k_group = np.asarray(k_group, dtype=np.float64)
    mask_group = np.asarray(mask_group, dtype=bool)
    if p_group.shape != k_group.shape or p_group.shape != mask_group.shape:
        raise ValueError("p, k, and mask must share a shape")
    kept_idx = np.flatnonzero(mask_group)
    dropped_idx = np.flatnonzero(~mask_group)
    kept_fraction = kept_idx.size / p_group.size
    p_kept = p_group[kept_idx] * np.sqrt(kept_fraction)
    k_kept = k_group[kept_idx]
    rng = np.random.default_rng(cfg.init_seed)

    norms = np.linalg.norm(p_kept) * np.linalg.norm(k_kept)
    cos_pk = np.clip(np.dot(p_kept, k_kept) / norms, -1.0, 1.0) if norms > 0 else 0.0
    smart_theta = float(np.arccos(cos_pk)) / (1.0 - alpha) if alpha < 1.0 else _THETA_HI
    smart_theta = min(max(smart_theta, _THETA_LO), _THETA_HI)

    for rerun in range(1, cfg.max_reruns + 1):
        theta0 = smart_theta if rerun == 1 else rng.uniform(_THETA_LO, _THETA_HI)
        hit = _newton_run(
            p_kept, k_kept, k_group, kept_idx, dropped_idx, alpha, rng, cfg, theta0
        )
        if hit is not None:
            est, theta = hit
            delta = None
            if true_angle is not None:
                delta = abs(included_angle(est, k_group) - true_angle)
            return AttackReport(rerun, True, est, theta, delta)
    return AttackReport(cfg.max_reruns, False)


def full_template_attack(
    rec: EnrollmentRecord,
    alpha: float,
    cfg: NRConfig,
    true_template: Template | None = None,
) -> FullAttackReport:
    """Invert every group of a record; the attack succeeds only if all do.

    The product of per-group rerun counts estimates the cost of hitting all
    groups within one simultaneous attempt budget.
    """
    layout = rec.protected.layout
    p_rows = layout.split(rec.protected.values)
    k_rows = layout.split(rec.key.values)
    mask_rows = rec.protected.mask.kept.reshape(layout.m, layout.group_dim)
    true_rows = layout.split(true_template.values) if true_template is not None else None

    reports = []
    recovered_rows = np.empty_like(p_rows)
    seeds = np.random.SeedSequence(cfg.init_seed).spawn(layout.m)
    for i in range(layout.m):
        group_cfg = NRConfig(
            cfg.max_iterations,
            cfg.residual_tolerance,
            cfg.max_reruns,
            init_seed=int(seeds[i].generate_state(1)[0]),
        )
        true_angle = None
        if true_rows is not None:
            true_angle = included_angle(true_rows[i], k_rows[i])
        rep = nr_invert_group(
            p_rows[i], k_rows[i], alpha, mask_rows[i], group_cfg, true_angle
        )
        reports.append(rep)
        if rep.converged:
            recovered_rows[i] = rep.recovered

    converged = all(r.converged for r in reports)
    total = sum(r.reruns_used for r in reports)
    product = float(np.prod([float(r.reruns_used) for r in reports]))
    recovered = recovered_rows.reshape(layout.d) if converged else None
    return FullAttackReport(reports, converged, total, product, recovered)


@dataclass(frozen=True)
class DeltaThetaTrial:
    d: int
    beta: float
    trial: int
    reruns: int
    converged: bool
    delta_theta_rad: float | None


@dataclass(frozen=True, eq=False)
class DeltaThetaSummary:
    d: int
    beta: float
    trials: int
    converged: int
    min_delta: float
    median_delta: float
    max_delta: float


@dataclass(frozen=True, eq=False)
class DeltaThetaStudy:
    trials: list[DeltaThetaTrial] = field(default_factory=list)
    summaries: list[DeltaThetaSummary] = field(default_factory=list)


def _delta_theta_trial(args) -> tuple[int, bool, float | None]:
    """One protected draw plus inversion; top-level so worker pools can run it."""
    d, beta, alpha, trial_seed, max_iterations, tolerance, rerun_cap = args
    layout = GroupLayout(d, 1)
    params = ProtectionParams(alpha, beta, layout)
    rng = np.random.default_rng(trial_seed)
    t = group_normalize(rng.standard_normal(d), layout)
    key = sample_key(layout, rng)
    mask = (
        random_dropout_mask(layout, beta, rng)
        if beta > 0
        else DropoutMask.all_kept(layout)
    )
    protected = protect_query(t, key, mask, params)
    true_angle = included_angle(t.values, key.values)
    trial_cfg = NRConfig(
        max_iterations, tolerance, rerun_cap, init_seed=int(rng.integers(2**63))
    )
    rep = nr_invert_group(
        protected.values, key.values, alpha, mask.kept, trial_cfg, true_angle
    )
    return rep.reruns_used, rep.converged, rep.delta_theta


def delta_theta_experiment(
    d_values: list[int],
    beta: float,
    trials: int,
    seed: int = 0,
    alpha: float = 0.9,
    cfg: NRConfig | None = None,
    rerun_cap: int = 200,
    jobs: int = 1,
) -> DeltaThetaStudy:
    """Measure recovery error vs dimension for single-group protection.

    For each d, random (template, key) pairs are protected with one-group
    slerp plus dropout at ratio beta; the first converged estimate's angle
    error is recorded. Non-convergent trials within the rerun cap are kept as
    censored rows (delta absent) and excluded from the quantiles.

    Trials are independent and own seed-derived generators, so jobs > 1 fans
    them out to a process pool without changing any result: outputs merge by
    trial index.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base_cfg = cfg or NRConfig()
    cap = min(base_cfg.max_reruns, rerun_cap)
    study_trials: list[DeltaThetaTrial] = []
    summaries: list[DeltaThetaSummary] = []
    root = np.random.SeedSequence(seed)

    for d in d_values:
        if d % 2 != 0:
            raise ValueError(f"d must be even, got {d}")
        trial_seeds = root.spawn(trials)
        tasks = [
            (d, beta, alpha, trial_seeds[n], base_cfg.max_iterations,
             base_cfg.residual_tolerance, cap)
            for n in range(trials)
        ]
        if jobs > 1:
            from concurrent.futures import ProcessPoolExecutor

            chunk = max(1, trials // (4 * jobs))
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(_delta_theta_trial, tasks, chunksize=chunk))
        else:
            outcomes = [_delta_theta_trial(task) for task in tasks]

        deltas = []
        for trial, (reruns, converged, delta) in enumerate(outcomes):
            study_trials.append(DeltaThetaTrial(d, beta, trial, reruns, converged, delta))
            if converged:
                deltas.append(delta)
        if deltas:
            arr = np.asarray(deltas)
            summaries.append(
                DeltaThetaSummary(
                    d, beta, trials, len(deltas),
                    float(arr.min()), float(np.median(arr)), float(arr.max()),
                )
            )
        else:
            summaries.append(
                DeltaThetaSummary(d, beta, trials, 0, np.nan, np.nan, np.nan)
            )
    return DeltaThetaStudy(study_trials, summaries)


def write_delta_theta_csv(path, study: DeltaThetaStudy) -> None:
    """Dump per-trial rows: (d, beta, trial, reruns, converged, delta_theta_rad)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["d", "beta", "trial", "reruns", "converged", "delta_theta_rad"])
        for row in study.trials:
            delta = "" if row.delta_theta_rad is None else f"{row.delta_theta_rad:.9g}"
            writer.writerow([row.d, f"{row.beta:.9g}", row.trial, row.reruns, int(row.converged), delta])
