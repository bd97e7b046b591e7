"""Independent reference implementations used only by tests.

Everything here is written from the definitions, favoring clarity over
speed (O(n^2) pair counting, prefix re-matching, double loops), and
deliberately shares no code with the package internals it checks.
"""

import math

import numpy as np


# ---------------------------------------------------------------------------
# Rank statistics, from the definitions
# ---------------------------------------------------------------------------

def naive_average_ranks(values):
    values = list(values)
    ranks = []
    for v in values:
        less = sum(1 for u in values if u < v)
        equal = sum(1 for u in values if u == v)
        ranks.append(less + (equal + 1) / 2.0)
    return ranks


def naive_plcc(a, b):
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    sa = sum((x - ma) ** 2 for x in a)
    sb = sum((x - mb) ** 2 for x in b)
    if sa == 0 or sb == 0:
        return None
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    return cov / math.sqrt(sa * sb)


def naive_srcc(a, b):
    return naive_plcc(naive_average_ranks(a), naive_average_ranks(b))


def naive_krcc(a, b):
    """Kendall tau-b by exhaustive pair enumeration."""
    a = list(a)
    b = list(b)
    n = len(a)
    concordant = discordant = tie_a_only = tie_b_only = tie_both = 0
    for i in range(n):
        ai, bi = a[i], b[i]
        for j in range(i + 1, n):
            da = ai - a[j]
            db = bi - b[j]
            if da == 0 and db == 0:
                tie_both += 1
            elif da == 0:
                tie_a_only += 1
            elif db == 0:
                tie_b_only += 1
            elif (da > 0) == (db > 0):
                concordant += 1
            else:
                discordant += 1
    total = n * (n - 1) // 2
    n1 = tie_a_only + tie_both
    n2 = tie_b_only + tie_both
    denom = (total - n1) * (total - n2)
    if denom == 0:
        return None
    return (concordant - discordant) / math.sqrt(denom)


def naive_rmse(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)) / len(a))


# ---------------------------------------------------------------------------
# Matching and AP, from the definitions
# ---------------------------------------------------------------------------

def naive_box_iou(a, b):
    ax1, ay1, aw, ah = a
    bx1, by1, bw, bh = b
    ix = max(0.0, min(ax1 + aw, bx1 + bw) - max(ax1, bx1))
    iy = max(0.0, min(ay1 + ah, by1 + bh) - max(ay1, by1))
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def naive_mask_iou(a, b):
    inter = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    return 1.0 if union == 0 else inter / union


def _iou_of(p, r):
    if "bbox" in p:
        return naive_box_iou(p["bbox"], r["bbox"])
    return naive_mask_iou(p["mask"], r["mask"])


def naive_greedy(preds, refs, tau):
    """preds/refs are dicts with 'category', optional 'confidence', and
    'bbox' or 'mask'.  Returns (pairs, precision, recall)."""
    order = sorted(
        range(len(preds)), key=lambda i: (-preds[i].get("confidence", 0.0), i)
    )
    taken = [False] * len(refs)
    pairs = []
    for pi in order:
        best = -1
        best_iou = -1.0
        for ri in range(len(refs)):
            if taken[ri] or refs[ri]["category"] != preds[pi]["category"]:
                continue
            iou = _iou_of(preds[pi], refs[ri])
            if iou > best_iou:
                best_iou = iou
                best = ri
        if best >= 0 and best_iou >= tau:
            taken[best] = True
            pairs.append((pi, best))
    pairs.sort()
    if not preds and not refs:
        return pairs, 1.0, 1.0
    precision = len(pairs) / len(preds) if preds else 0.0
    recall = len(pairs) / len(refs) if refs else 0.0
    return pairs, precision, recall


def naive_category_ap(preds, refs, tau):
    """AP for one category by re-matching every prediction prefix."""
    if not refs or not preds:
        return 0.0
    order = sorted(
        range(len(preds)), key=lambda i: (-preds[i].get("confidence", 0.0), i)
    )
    k = len(refs)
    points = []
    for plen in range(1, len(order) + 1):
        prefix = [preds[i] for i in order[:plen]]
        pairs, _, _ = naive_greedy(prefix, refs, tau)
        tp = len(pairs)
        points.append((tp / k, tp / plen))
    ap = 0.0
    prev_recall = 0.0
    for recall, _ in points:
        if recall > prev_recall:
            envelope = max(p for r, p in points if r >= recall)
            ap += (recall - prev_recall) * envelope
            prev_recall = recall
    return ap


def naive_map(preds, refs, tau):
    categories = []
    for item in list(refs) + list(preds):
        if item["category"] not in categories:
            categories.append(item["category"])
    if not categories:
        return 1.0
    total = 0.0
    for cat in categories:
        cp = [p for p in preds if p["category"] == cat]
        cr = [r for r in refs if r["category"] == cat]
        total += naive_category_ap(cp, cr, tau)
    return total / len(categories)


# ---------------------------------------------------------------------------
# Windowed SSIM by direct double loop
# ---------------------------------------------------------------------------

def naive_ssim(reference, test, radius=5, sigma=1.5, k1=0.01, k2=0.03, dyn_range=255.0):
    lw = np.array([0.299, 0.587, 0.114])
    x = reference.astype(np.float64) @ lw
    y = test.astype(np.float64) @ lw
    side = 2 * radius + 1
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2 * sigma * sigma))
    win = np.outer(g, g)
    win /= win.sum()
    c1 = (k1 * dyn_range) ** 2
    c2 = (k2 * dyn_range) ** 2
    h, w = x.shape
    values = []
    for i in range(h - side + 1):
        for j in range(w - side + 1):
            px = x[i:i + side, j:j + side]
            py = y[i:i + side, j:j + side]
            mx = float((win * px).sum())
            my = float((win * py).sum())
            vx = float((win * px * px).sum()) - mx * mx
            vy = float((win * py * py).sum()) - my * my
            cov = float((win * px * py).sum()) - mx * my
            values.append(
                ((2 * mx * my + c1) * (2 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return float(np.mean(values))
