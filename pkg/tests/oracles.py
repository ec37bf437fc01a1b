"""Slow, loop-based reference implementations used as test oracles."""

import math


def lof_bruteforce(reference, queries, k, tie_rtol=1e-9, floor=1e-12):
    """Tie-inclusive LOF of each query against ``reference`` with plain loops.

    Reference points exclude themselves from their own neighbourhood; queries
    are not excluded from the reference (novelty scoring).
    """
    ref = [tuple(map(float, r)) for r in reference]
    n = len(ref)

    def neighbourhood(dists):
        kd = sorted(dists)[k - 1]
        return kd, [j for j, d in enumerate(dists) if d <= kd * (1 + tie_rtol)]

    kdist, lrd = [0.0] * n, [0.0] * n
    ref_d = []
    for i in range(n):
        row = [math.inf if i == j else math.dist(ref[i], ref[j]) for j in range(n)]
        ref_d.append(row)
        kdist[i], _ = neighbourhood(row)
    for i in range(n):
        _, nb = neighbourhood(ref_d[i])
        total = sum(max(kdist[j], ref_d[i][j]) for j in nb)
        lrd[i] = max(1.0 / max(total / len(nb), floor), floor)

    out = []
    for q in queries:
        row = [math.dist(tuple(map(float, q)), r) for r in ref]
        _, nb = neighbourhood(row)
        total = sum(max(kdist[j], row[j]) for j in nb)
        lrd_q = max(1.0 / max(total / len(nb), floor), floor)
        out.append(sum(lrd[j] for j in nb) / len(nb) / lrd_q)
    return out


def kl_script(p, q):
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))


def inverse_2x2(m):
    (a, b), (c, d) = m
    det = a * d - b * c
    return [[d / det, -b / det], [-c / det, a / det]]


def quad_form_2x2(v, m):
    inv = inverse_2x2(m)
    return sum(v[i] * inv[i][j] * v[j] for i in range(2) for j in range(2))
