#!/usr/bin/env python3
# Protect a face template and match queries against the shared record.
#
# A template lives on a hypersphere, split into m contiguous groups that are
# each unit-normalized. Protection rotates every group toward the matching
# group of a random key template by a fraction alpha of their included angle,
# then zeroes a ratio beta of coordinates per group. The record that gets
# shared is (protected vector, key, mask, weights) - never the template.

import numpy as np

from slerpshield import (
    EnrollmentRecord,
    GroupLayout,
    ProtectionParams,
    group_normalize,
    identify,
    included_angle,
    protect,
    verify,
)

rng = np.random.default_rng(0)
layout = GroupLayout(d=784, m=49)            # 49 groups of 16 dimensions
params = ProtectionParams(alpha=0.9, beta=0.5, layout=layout)

# Fake a gallery: 5 identities, each a unit template plus a noisy second sample.
def sample_pair(rng):
    base = rng.standard_normal(784)
    noisy = base + 0.12 * rng.standard_normal(784)
    return group_normalize(base, layout), group_normalize(noisy, layout)

gallery, queries, enrolled_templates = [], [], []
for label in ("alice", "bob", "carol", "dan", "erin"):
    enrolled_t, query_t = sample_pair(rng)
    protected, key = protect(enrolled_t, params, rng_seed=rng.integers(2**63))
    gallery.append(EnrollmentRecord(label, protected, key))
    queries.append((label, query_t))
    enrolled_templates.append(enrolled_t)

# How far did the rotation move the template? Per-group angles to the key
# shrink to (1 - alpha) of the original: the rotated vector is key-like.
# (Measured before dropout; masking then zeroes half of each group.)
from slerpshield import group_slerp

rec = gallery[0]
rotated = group_slerp(enrolled_templates[0], rec.key, params.alpha)
g = slice(0, 16)
print("group 0 angle(template, key) :", np.degrees(included_angle(enrolled_templates[0].values[g], rec.key.values[g])).round(1), "deg")
print("group 0 angle(rotated, key)  :", np.degrees(included_angle(rotated.values[g], rec.key.values[g])).round(1), "deg")
print("dropped coordinates per group:", rec.protected.mask.per_group_drop_counts[:5], "...")

# 1:1 verification. The client re-runs the record's exact transform on the
# query (same key, same mask) and compares group-wise.
print("\nverification at threshold 0.985:")
for label, query_t in queries[:3]:
    res = verify(query_t, gallery[0], threshold=0.985, params=params)
    print(f"  query from {label:6s} vs alice -> score {res.score:.6f} accepted={res.accepted}")

# 1:N identification ranks every record by score.
print("\nidentification of carol's second sample:")
for rank, res in enumerate(identify(queries[2][1], gallery, params)[:3], 1):
    print(f"  {rank}. {res.identity_label:6s} {res.score:.6f}")
