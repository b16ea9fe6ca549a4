"""Client-side protocol: verify a query against a record, or rank a whole store.

The server shares protected templates together with their keys; a client
re-runs the enrolled transform on its query with each record's key and mask,
then compares the two protected vectors group-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateAngle, EmptyStore, LayoutMismatch
from .protection import KeyTemplate, ProtectedTemplate, ProtectionParams, protect_query
from .templates import Template, groupwise_similarity

# Sentinel score reported when verification fails closed.
FAILED_SCORE = -1.0


@dataclass(frozen=True, eq=False)
class EnrollmentRecord:
    identity_label: str
    protected: ProtectedTemplate
    key: KeyTemplate


@dataclass(frozen=True)
class MatchResult:
    identity_label: str
    score: float
    accepted: bool
    threshold: float
    error: str | None = None


def verify(
    t_q: Template,
    rec: EnrollmentRecord,
    threshold: float,
    params: ProtectionParams,
) -> MatchResult:
    """Score a query against one record; accept iff score >= threshold.

    Fails closed: a degenerate query/key pair yields score -1 and
    accepted=False with the error surfaced, never an acceptance.
    """
    if t_q.layout != rec.protected.layout:
        raise LayoutMismatch(
            f"query layout {t_q.layout} differs from record {rec.protected.layout}"
        )
    try:
        q_protected = protect_query(
            t_q, rec.key, rec.protected.mask, params, rec.protected.weights
        )
    except DegenerateAngle as exc:
        return MatchResult(rec.identity_label, FAILED_SCORE, False, threshold, str(exc))
    score = groupwise_similarity(q_protected, rec.protected, rec.protected.weights)
    return MatchResult(rec.identity_label, score, score >= threshold, threshold)


def identify(
    t_q: Template,
    store: list[EnrollmentRecord],
    params: ProtectionParams,
    threshold: float = -1.0,
) -> list[MatchResult]:
    """Verify against every record and rank by descending score.

    Ties keep enrollment order, so identical inputs give identical rankings.
    """
    if not store:
        raise EmptyStore("no enrolled records to identify against")
    results = [verify(t_q, rec, threshold, params) for rec in store]
    order = sorted(range(len(results)), key=lambda i: (-results[i].score, i))
    return [results[i] for i in order]
