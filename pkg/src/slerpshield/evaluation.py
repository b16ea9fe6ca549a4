"""Security evaluation suite on synthetic identities.

Real face datasets are out of reach here, so populations are synthesized with
a controlled angular margin: class centers drawn uniformly on the sphere,
samples perturbed by calibrated Gaussian noise. On top of that sit the
recognition-accuracy sweep, the rotation-degree ablation, score-wise
linkability, and revocability checks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import CalibrationFailure, InsufficientPairs
from .matching import EnrollmentRecord, verify
from .protection import (
    KeyTemplate,
    ProtectionParams,
    protect,
    protect_query,
    sample_key,
    sample_mask,
)
from .templates import GroupLayout, GroupWeights, Template, groupwise_similarity


@dataclass(frozen=True)
class SyntheticPopulation:
    """Generator configuration; intra_angle is the target mean genuine angle."""

    identities: int
    samples_per_identity: int
    d: int
    intra_angle: float
    seed: int = 0
    m: int = 1

    def __post_init__(self):
        if self.identities < 2:
            raise ValueError("need at least 2 identities")
        if self.samples_per_identity < 1:
            raise ValueError("need at least 1 sample per identity")
        if not 0.0 <= self.intra_angle < np.pi / 2:
            raise ValueError("intra_angle must be in [0, pi/2)")


@dataclass(frozen=True, eq=False)
class Population:
    """Generated templates, shaped (identities, samples, d), group-normalized."""

    values: np.ndarray
    layout: GroupLayout
    sigma: float
    mean_genuine_angle: float

    @property
    def n_identities(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def label(self, i: int) -> str:
        return f"id{i:04d}"

    def template(self, i: int, j: int) -> Template:
        return Template(self.values[i, j], self.layout)


def _mean_genuine_angle(values: np.ndarray, m: int) -> float:
    """Mean angle over all within-identity sample pairs.

    Each sample is group-normalized, so the whole-vector cosine is the mean of
    the per-group cosines: dot / m.
    """
    n_id, n_s, _ = values.shape
    angles = []
    for a in range(n_s):
        for b in range(a + 1, n_s):
            cos = np.clip(np.einsum("id,id->i", values[:, a], values[:, b]) / m, -1.0, 1.0)
            angles.append(np.arccos(cos))
    return float(np.mean(np.concatenate(angles)))


def generate_population(cfg: SyntheticPopulation) -> Population:
    """Sample centers uniformly on the sphere and calibrate per-sample noise.

    The noise scale sigma is bisected, on fixed draws, until the measured mean
    genuine angle hits cfg.intra_angle; 50 bisection steps without landing
    inside the +-10% band is a CalibrationFailure.
    """
    layout = GroupLayout(cfg.d, cfg.m)
    rng = np.random.default_rng(cfg.seed)
    centers = rng.standard_normal((cfg.identities, cfg.d))
    centers /= np.linalg.norm(centers, axis=1)[:, None]
    # Calibration needs genuine pairs; with a single sample per identity the
    # noise scale is still calibrated on two probe draws per identity.
    n_cal = max(cfg.samples_per_identity, 2)
    noise = rng.standard_normal((cfg.identities, n_cal, cfg.d))

    def build(sigma: float, n_s: int) -> np.ndarray:
        raw = centers[:, None, :] + sigma * noise[:, :n_s]
        rows = raw.reshape(-1, layout.m, layout.group_dim)
        norms = np.linalg.norm(rows, axis=2)
        rows = rows / norms[:, :, None]
        return rows.reshape(cfg.identities, n_s, cfg.d)

    if cfg.intra_angle == 0.0:
        return Population(build(0.0, cfg.samples_per_identity), layout, 0.0, 0.0)

    target = cfg.intra_angle
    lo, hi = 0.0, 0.25
    for _ in range(60):
        if _mean_genuine_angle(build(hi, n_cal), layout.m) >= target:
            break
        hi *= 2.0
    else:
        raise CalibrationFailure(f"no sigma reaches angle {target:.3f}")

    sigma = hi
    for _ in range(50):
        sigma = 0.5 * (lo + hi)
        measured = _mean_genuine_angle(build(sigma, n_cal), layout.m)
        if abs(measured - target) <= 0.02 * target:
            break
        if measured < target:
            lo = sigma
        else:
            hi = sigma
    mean_angle = _mean_genuine_angle(build(sigma, n_cal), layout.m)
    if abs(mean_angle - target) > 0.10 * target:
        raise CalibrationFailure(
            f"calibrated angle {mean_angle:.4f} misses target {target:.4f} by >10%"
        )
    return Population(build(sigma, cfg.samples_per_identity), layout, sigma, mean_angle)


# ---------------------------------------------------------------------------
# Enrollment helpers shared by the harnesses


def enroll_population(
    pop: Population,
    params: ProtectionParams,
    seed: int = 0,
    enroll_sample: int = 0,
) -> list[EnrollmentRecord]:
    """Protect one sample per identity, each under its own derived seed."""
    records = []
    seeds = np.random.SeedSequence(seed).spawn(pop.n_identities)
    for i in range(pop.n_identities):
        protected, key = protect(
            pop.template(i, enroll_sample), params, rng_seed=seeds[i]
        )
        records.append(EnrollmentRecord(pop.label(i), protected, key))
    return records


def _genuine_impostor_scores(
    pop: Population,
    records: list[EnrollmentRecord],
    params: ProtectionParams,
    impostors_per_query: int | None,
    seed: int,
    enroll_sample: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    genuine, impostor = [], []
    others = np.arange(pop.n_identities)
    for i in range(pop.n_identities):
        for j in range(pop.n_samples):
            if j == enroll_sample:
                continue
            query = pop.template(i, j)
            genuine.append(verify(query, records[i], -1.0, params).score)
            rivals = others[others != i]
            if impostors_per_query is not None and impostors_per_query < rivals.size:
                rivals = rng.choice(rivals, size=impostors_per_query, replace=False)
            for r in rivals:
                impostor.append(verify(query, records[r], -1.0, params).score)
    return np.asarray(genuine), np.asarray(impostor)


# ---------------------------------------------------------------------------
# Recognition accuracy


@dataclass(frozen=True, eq=False)
class SweepResult:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    accuracy: np.ndarray
    genuine_scores: np.ndarray
    impostor_scores: np.ndarray
    eer: float
    eer_threshold: float


def eer_from_scores(genuine: np.ndarray, impostor: np.ndarray) -> tuple[float, float]:
    """Equal error rate and its threshold, swept over the pooled scores."""
    thresholds = np.unique(np.concatenate([genuine, impostor]))
    frr = np.mean(genuine[:, None] < thresholds[None, :], axis=0)
    far = np.mean(impostor[:, None] >= thresholds[None, :], axis=0)
    idx = int(np.argmin(np.abs(frr - far)))
    return float(0.5 * (frr[idx] + far[idx])), float(thresholds[idx])


def accuracy_sweep(
    pop: Population,
    params: ProtectionParams,
    thresholds: np.ndarray | None = None,
    seed: int = 0,
    impostors_per_query: int | None = None,
) -> SweepResult:
    """Score all genuine and (optionally sampled) impostor pairs through the
    full protect/verify pipeline, then trace the ROC by threshold sweep."""
    if pop.n_samples < 2:
        raise ValueError("population needs at least 2 samples per identity")
    records = enroll_population(pop, params, seed)
    genuine, impostor = _genuine_impostor_scores(
        pop, records, params, impostors_per_query, seed
    )
    if thresholds is None:
        thresholds = np.linspace(-1.0, 1.0, 2001)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    tpr = np.mean(genuine[:, None] >= thresholds[None, :], axis=0)
    fpr = np.mean(impostor[:, None] >= thresholds[None, :], axis=0)
    n_g, n_i = genuine.size, impostor.size
    accuracy = (tpr * n_g + (1.0 - fpr) * n_i) / (n_g + n_i)
    eer, eer_thr = eer_from_scores(genuine, impostor)
    return SweepResult(thresholds, fpr, tpr, accuracy, genuine, impostor, eer, eer_thr)


def unprotected_scores(
    pop: Population,
    impostors_per_query: int | None = None,
    seed: int = 0,
    enroll_sample: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Baseline genuine/impostor scores: plain group-wise similarity on the raw
    templates, same pairing scheme as the protected sweep."""
    rng = np.random.default_rng(seed)
    weights = GroupWeights.uniform(pop.layout.m)
    genuine, impostor = [], []
    others = np.arange(pop.n_identities)
    for i in range(pop.n_identities):
        enrolled = pop.template(i, enroll_sample)
        for j in range(pop.n_samples):
            if j == enroll_sample:
                continue
            query = pop.template(i, j)
            genuine.append(groupwise_similarity(query, enrolled, weights))
            rivals = others[others != i]
            if impostors_per_query is not None and impostors_per_query < rivals.size:
                rivals = rng.choice(rivals, size=impostors_per_query, replace=False)
            for r in rivals:
                impostor.append(
                    groupwise_similarity(query, pop.template(r, enroll_sample), weights)
                )
    return np.asarray(genuine), np.asarray(impostor)


# ---------------------------------------------------------------------------
# Rotation-degree ablation


@dataclass(frozen=True)
class AblationRow:
    alpha: float
    mean_genuine: float
    mean_impostor: float

    @property
    def gap(self) -> float:
        return self.mean_genuine - self.mean_impostor


def alpha_ablation(
    pop: Population,
    alphas: list[float],
    params: ProtectionParams,
    seed: int = 0,
    impostors_per_query: int = 10,
) -> list[AblationRow]:
    """Mean genuine and impostor scores per rotation degree, with the key and
    mask of every record held fixed across alphas so only alpha moves."""
    layout = pop.layout
    rng = np.random.default_rng(seed)
    seeds = np.random.SeedSequence(seed).spawn(pop.n_identities)
    keys: list[KeyTemplate] = []
    masks = []
    for i in range(pop.n_identities):
        sub = np.random.default_rng(seeds[i])
        keys.append(sample_key(layout, sub))
        masks.append(sample_mask(params, rng_seed=sub))

    rows = []
    others = np.arange(pop.n_identities)
    for alpha in alphas:
        p_alpha = replace(params, alpha=alpha)
        enrolled = [
            protect_query(pop.template(i, 0), keys[i], masks[i], p_alpha)
            for i in range(pop.n_identities)
        ]
        genuine, impostor = [], []
        pair_rng = np.random.default_rng(rng.integers(2**63))
        for i in range(pop.n_identities):
            for j in range(1, pop.n_samples):
                query = pop.template(i, j)
                q_prot = protect_query(query, keys[i], masks[i], p_alpha)
                genuine.append(groupwise_similarity(q_prot, enrolled[i]))
                rivals = others[others != i]
                if impostors_per_query < rivals.size:
                    rivals = pair_rng.choice(rivals, size=impostors_per_query, replace=False)
                for r in rivals:
                    q_r = protect_query(query, keys[r], masks[r], p_alpha)
                    impostor.append(groupwise_similarity(q_r, enrolled[r]))
        rows.append(
            AblationRow(alpha, float(np.mean(genuine)), float(np.mean(impostor)))
        )
    return rows


# ---------------------------------------------------------------------------
# Unlinkability


@dataclass(frozen=True, eq=False)
class LinkabilityReport:
    d_sys: float
    mated_hist: np.ndarray
    nonmated_hist: np.ndarray
    bin_edges: np.ndarray
    n_mated: int
    n_nonmated: int
    protocol: str


def _linkability_from_scores(
    mated: np.ndarray, nonmated: np.ndarray, bins: int, protocol: str
) -> LinkabilityReport:
    edges = np.linspace(-1.0, 1.0, bins + 1)
    m_counts, _ = np.histogram(mated, bins=edges)
    n_counts, _ = np.histogram(nonmated, bins=edges)
    p_m = m_counts / m_counts.sum()
    p_n = n_counts / n_counts.sum()
    d_local = np.zeros(bins)
    both = p_n > 0
    lr = np.divide(p_m, p_n, out=np.zeros_like(p_m), where=both)
    d_local[both] = np.maximum(0.0, 2.0 * lr[both] / (1.0 + lr[both]) - 1.0)
    d_local[(p_n == 0) & (p_m > 0)] = 1.0
    d_sys = float(np.dot(d_local, p_m))
    return LinkabilityReport(d_sys, m_counts, n_counts, edges, mated.size, nonmated.size, protocol)


def sswl(
    pop: Population,
    params: ProtectionParams,
    protocol: str = "protected",
    n_pairs: int = 1000,
    bins: int = 100,
    seed: int = 0,
) -> LinkabilityReport:
    """Score-wise linkability between mated and non-mated pairs.

    Mated pairs take two samples of one identity, each protected under a fresh
    key; non-mated pairs take samples of two identities. The local measure is
    max(0, 2 LR / (1 + LR) - 1) with unit prior odds, accumulated over the
    mated histogram mass; 0 means the two enrollments cannot be linked.
    """
    if protocol not in ("protected", "unprotected"):
        raise ValueError(f"unknown protocol {protocol!r}")
    if n_pairs < 500:
        raise InsufficientPairs(f"need >= 500 pairs per class, asked for {n_pairs}")
    if pop.n_identities < 2:
        raise InsufficientPairs("need at least two identities for non-mated pairs")

    rng = np.random.default_rng(seed)
    protect_seeds = np.random.SeedSequence(rng.integers(2**63)).spawn(4 * n_pairs)
    seed_iter = iter(protect_seeds)

    def one_protection(i: int, j: int):
        if protocol == "unprotected":
            return pop.template(i, j)
        protected, _ = protect(pop.template(i, j), params, rng_seed=next(seed_iter))
        return protected

    mated = np.empty(n_pairs)
    for n in range(n_pairs):
        i = int(rng.integers(pop.n_identities))
        if pop.n_samples >= 2:
            j1, j2 = rng.choice(pop.n_samples, size=2, replace=False)
        else:
            j1 = j2 = 0
        mated[n] = groupwise_similarity(one_protection(i, int(j1)), one_protection(i, int(j2)))

    nonmated = np.empty(n_pairs)
    for n in range(n_pairs):
        i1, i2 = rng.choice(pop.n_identities, size=2, replace=False)
        j1 = int(rng.integers(pop.n_samples))
        j2 = int(rng.integers(pop.n_samples))
        nonmated[n] = groupwise_similarity(one_protection(int(i1), j1), one_protection(int(i2), j2))

    return _linkability_from_scores(mated, nonmated, bins, protocol)


# ---------------------------------------------------------------------------
# Revocability


@dataclass(frozen=True, eq=False)
class RevocabilityReport:
    direct_score: float
    replay_score: float
    query_score: float
    query_accepted: bool
    renewed_identical: bool


def revocability_check(
    t: Template,
    params: ProtectionParams,
    seeds: tuple[int, int],
    query: Template | None = None,
    threshold: float = -1.0,
) -> RevocabilityReport:
    """Protect t twice and probe the renewed record.

    direct_score compares the two protected vectors; replay_score pushes the
    old protected vector through the new record's transform as if an attacker
    replayed the leaked credential as a query; query_score is a genuine query
    against the renewed record.
    """
    p1, _ = protect(t, params, rng_seed=seeds[0])
    p2, k2 = protect(t, params, rng_seed=seeds[1])
    rec2 = EnrollmentRecord("renewed", p2, k2)
    direct = groupwise_similarity(p1, p2, p2.weights)
    replay = verify(Template(p1.values, p1.layout), rec2, threshold, params).score
    q = verify(query if query is not None else t, rec2, threshold, params)
    identical = bool(np.array_equal(p1.values, p2.values))
    return RevocabilityReport(direct, replay, q.score, q.accepted, identical)


@dataclass(frozen=True, eq=False)
class RevocabilityStudy:
    replay_scores: np.ndarray
    direct_scores: np.ndarray
    impostor_scores: np.ndarray
    genuine_accept_rate: float
    threshold: float
    ks_statistic: float
    ks_pvalue: float


def revocability_study(
    pop: Population,
    params: ProtectionParams,
    n_templates: int = 500,
    seed: int = 0,
    threshold: float | None = None,
) -> RevocabilityStudy:
    """Population-level revocability: re-enroll templates under fresh keys.

    The KS test compares the direct scores of cross-key protections of the
    SAME template against the same scoring on different-template pairs: with
    matching distributions (p above the significance floor) an old record
    leaks nothing usable about its renewal. Note the rotation retains a
    (1 - alpha)-scale template component by design, so a residual shift on the
    order of a^2 exists at any alpha < 1; large samples can resolve it.

    The acceptance threshold defaults to the EER operating point of a sweep
    on the same population and parameters.
    """
    from scipy.stats import ks_2samp

    if threshold is None:
        sweep = accuracy_sweep(pop, params, seed=seed, impostors_per_query=10)
        threshold = sweep.eer_threshold

    rng = np.random.default_rng(seed)
    seeds = np.random.SeedSequence(rng.integers(2**63)).spawn(4 * n_templates)
    replay, direct, impostor = [], [], []
    accepted = 0
    for n in range(n_templates):
        i = int(rng.integers(pop.n_identities))
        j = int(rng.integers(pop.n_samples))
        t = pop.template(i, j)
        rep = revocability_check(
            t,
            params,
            (seeds[4 * n], seeds[4 * n + 1]),
            query=pop.template(i, (j + 1) % pop.n_samples),
            threshold=threshold,
        )
        replay.append(rep.replay_score)
        direct.append(rep.direct_score)
        accepted += int(rep.query_accepted)
        # Impostor baseline under the same scoring: two protections of
        # different identities' templates.
        i_imp = int(rng.integers(pop.n_identities - 1))
        if i_imp >= i:
            i_imp += 1
        pa, _ = protect(t, params, rng_seed=seeds[4 * n + 2])
        pb, _ = protect(
            pop.template(i_imp, j), params, rng_seed=seeds[4 * n + 3]
        )
        impostor.append(groupwise_similarity(pa, pb, pa.weights))

    direct_arr = np.asarray(direct)
    impostor_arr = np.asarray(impostor)
    ks = ks_2samp(direct_arr, impostor_arr)
    return RevocabilityStudy(
        np.asarray(replay),
        direct_arr,
        impostor_arr,
        accepted / n_templates,
        float(threshold),
        float(ks.statistic),
        float(ks.pvalue),
    )


# ---------------------------------------------------------------------------
# CSV reports


def write_roc_csv(path, sweep: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr", "accuracy"])
        for t, f, tp, acc in zip(sweep.thresholds, sweep.fpr, sweep.tpr, sweep.accuracy):
            writer.writerow([f"{t:.9g}", f"{f:.9g}", f"{tp:.9g}", f"{acc:.9g}"])


def write_ablation_csv(path, rows: list[AblationRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "mean_genuine", "mean_impostor", "gap"])
        for r in rows:
            writer.writerow(
                [f"{r.alpha:.9g}", f"{r.mean_genuine:.9g}", f"{r.mean_impostor:.9g}", f"{r.gap:.9g}"]
            )


def write_sswl_csv(path, reports: list[LinkabilityReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["protocol", "n_mated", "n_nonmated", "d_sys"])
        for r in reports:
            writer.writerow([r.protocol, r.n_mated, r.n_nonmated, f"{r.d_sys:.9g}"])


def write_revocability_csv(path, study: RevocabilityStudy) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n_templates", "threshold", "genuine_accept_rate", "ks_statistic", "ks_pvalue"]
        )
        writer.writerow(
            [
                study.replay_scores.size,
                f"{study.threshold:.9g}",
                f"{study.genuine_accept_rate:.9g}",
                f"{study.ks_statistic:.9g}",
                f"{study.ks_pvalue:.9g}",
            ]
        )
