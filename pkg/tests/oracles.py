"""Independent reference implementations used as test oracles.

Written in plain Python without sharing code paths with the package.
"""

import math


def joint_distance_reference(dists, weights, main, eta, kappa):
    """Straight-line scalar transcription of the joint distance."""
    f = []
    for d in dists:
        if d <= kappa:
            f.append(1e12 if d == 0 else min(1.0 / d, 1e12))
        else:
            f.append(0.0)
    total = math.fsum(f)
    if total == 0:
        return dists[main]
    sub = 0.0
    for w, fi in zip(weights, f):
        sub += w * (eta * fi / total) * dists[main]
    return dists[main] - sub


def l2(a, b):
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def naive_sorted(dists):
    # selection by repeated scan, lowest index wins ties
    left = list(range(len(dists)))
    out = []
    while left:
        best = left[0]
        for j in left:
            if dists[j] < dists[best]:
                best = j
        out.append(best)
        left.remove(best)
    return out


def naive_rerank(member_vecs, gallery_vecs, main, k1, k2, second=None, dist=None):
    """Materialise every list and count memberships by scanning."""
    dist = dist or l2
    lists = [naive_sorted([dist(m, g) for g in gallery_vecs]) for m in member_vecs]
    main_full = lists[main]
    main_top = main_full[:k1]
    assist_tops = [lists[i][:k2] for i in range(len(member_vecs)) if i not in (main, second)]
    second_top = lists[second][:k2] if second is not None else []
    counts = {}
    for g in main_top:
        c = 0
        for lst in assist_tops:
            for h in lst:
                if h == g:
                    c += 1
        counts[g] = c
    tier1 = [g for g in main_top if g in second_top]
    rest = [g for g in main_top if g not in second_top]
    ordered = []
    for c in sorted(set(counts[g] for g in rest), reverse=True):
        ordered += [g for g in rest if counts[g] == c]
    return tier1 + ordered + main_full[k1:]


def naive_ranks(labels, truth):
    """Positions (1-based) of correct labels, by full scan."""
    return [i + 1 for i, lbl in enumerate(labels) if lbl == truth]


def naive_ap(labels, truth):
    pos = naive_ranks(labels, truth)
    if not pos:
        return None
    return sum((k + 1) / p for k, p in enumerate(pos)) / len(pos)


def naive_cmc(all_labels, truths, r):
    valid = [(l, t) for l, t in zip(all_labels, truths) if naive_ranks(l, t)]
    hit = sum(1 for l, t in valid if naive_ranks(l, t)[0] <= r)
    return hit / len(valid)
