"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math

from idpattern.taxonomy import Unknown


def brute_force_query(store, query, k):
    """Score every entry with a plain-Python exact sum and fully sort."""
    q = [float(x) for x in query]
    scored = []
    for entry in store.entries:
        score = math.fsum(a * b for a, b in zip(entry.vector.tolist(), q))
        scored.append((-score, entry.chunk_id, entry))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [(e, -s) for s, _, e in scored[:k]]


def exhaustive_match(predictions, truth_ids, taxonomy):
    """Try every assignment of predictions to equal-id truths; keep one maximizing TP.

    Among the leftover predictions, a known id related by partial overlap to
    a truth left unassigned is ambiguous; everything else is a false positive.
    """
    patterns = [f.pattern for f in predictions]
    options = [[None] + [t for t in truth_ids if p == t] for p in patterns]
    best = None
    for choice in itertools.product(*options):
        used = [t for t in choice if t is not None]
        if len(used) != len(set(used)):
            continue
        if best is None or len(used) > len([t for t in best if t is not None]):
            best = choice
    assigned = {t for t in best if t is not None}
    free = [t for t in truth_ids if t not in assigned]
    amb = fp = 0
    for p, t in zip(patterns, best):
        if t is not None:
            continue
        if not isinstance(p, Unknown) and any(taxonomy.partially_overlaps(p, u) for u in free):
            amb += 1
        else:
            fp += 1
    return len(assigned), fp, len(free), amb
