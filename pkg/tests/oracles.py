"""Independent reference implementations used as test oracles.

Each is written from the textbook definition with plain loops, sharing no
code with the package.
"""

import math

import numpy as np


def sinkhorn(scores, iterations, dustbin):
    """Scaling-form Sinkhorn with dustbins: rows sum to 1 (dustbin row to n), columns to 1 (dustbin column to m)."""
    m, n = scores.shape
    Z = np.full((m + 1, n + 1), float(dustbin))
    Z[:m, :n] = scores
    K = np.exp(Z - Z.max())
    a = np.r_[np.ones(m), n]
    b = np.r_[np.ones(n), m]
    u, v = np.ones(m + 1), np.ones(n + 1)
    for _ in range(iterations):
        u = a / (K @ v)
        v = b / (K.T @ u)
    return u[:, None] * K * v[None, :]


def similarity(fa, fb, scale):
    d = np.sqrt(((fa[:, None, :] - fb[None, :, :]) ** 2).sum(-1))
    sigma = np.median(d) * scale
    return np.exp(-d**2 / (2 * sigma**2))


def dbscan(points, weights, eps, min_pts):
    """Queue-based DBSCAN with explicit range queries, visiting points in index order.

    With ``weights`` the distance is d(i, j) * 2 / (w_i + w_j + 1e-6).
    """
    n = len(points)

    def dist(i, j):
        d = math.sqrt(sum((points[i][k] - points[j][k]) ** 2 for k in range(3)))
        return d if weights is None else d * 2.0 / (weights[i] + weights[j] + 1e-6)

    def region(i):
        return [j for j in range(n) if dist(i, j) <= eps]

    labels = [None] * n
    c = -1
    for p in range(n):
        if labels[p] is not None:
            continue
        nbrs = region(p)
        if len(nbrs) < min_pts:
            labels[p] = -1
            continue
        c += 1
        labels[p] = c
        queue = [q for q in nbrs if q != p]
        while queue:
            q = queue.pop(0)
            if labels[q] == -1:
                labels[q] = c
            if labels[q] is not None:
                continue
            labels[q] = c
            more = region(q)
            if len(more) >= min_pts:
                queue.extend(more)
    return np.array(labels, dtype=np.int64)


def sc_matrix(x, y, sigma):
    n = len(x)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                out[i, j] = 1.0
                continue
            d = abs(np.linalg.norm(x[i] - x[j]) - np.linalg.norm(y[i] - y[j]))
            out[i, j] = max(0.0, 1.0 - d * d / (sigma * sigma))
    return out


def augmentation(pool, centers, budget):
    d = [min(math.dist(p, c) for c in centers) for p in pool]
    return sorted(range(len(pool)), key=lambda i: (d[i], i))[:budget]


def circle_loss(anchors, dp_margin=1.4, dn_margin=0.1, floor=0.1):
    total = 0.0
    for a in anchors:
        pos = 0.0
        for d, o in zip(a["pos_dist"], a["pos_overlap"]):
            if o < floor:
                continue
            beta = max(0.0, d - dp_margin)
            pos += math.exp(math.sqrt(o) * beta * (d - dp_margin))
        neg = 0.0
        for d in a["neg_dist"]:
            beta = max(0.0, dn_margin - d)
            neg += math.exp(beta * (dn_margin - d))
        total += math.log(1.0 + pos * neg)
    return total / len(anchors)


def point_matching_loss(Cs, Ms, Is, Js):
    losses = []
    for C, M, I, J in zip(Cs, Ms, Is, Js):
        m, n = C.shape[0] - 1, C.shape[1] - 1
        total = 0.0
        for x, y in M:
            total -= math.log(C[x, y])
        for x in I:
            total -= math.log(C[x, n])
        for y in J:
            total -= math.log(C[m, y])
        losses.append(total)
    return sum(losses) / len(losses)


def random_anchors(rng):
    out = []
    for _ in range(int(rng.integers(1, 6))):
        npos, nneg = rng.integers(0, 5, size=2)
        out.append({"pos_dist": rng.uniform(0, 3, npos), "pos_overlap": rng.uniform(0, 1, npos),
                    "neg_dist": rng.uniform(0, 3, nneg)})
    return out


def random_assignments(rng):
    Cs, Ms, Is, Js = [], [], [], []
    for _ in range(int(rng.integers(1, 5))):
        m, n = rng.integers(1, 7, size=2)
        Cs.append(rng.uniform(1e-3, 1.0, size=(m + 1, n + 1)))
        rows, cols = rng.permutation(m), rng.permutation(n)
        k = int(rng.integers(0, min(m, n) + 1))
        Ms.append(list(zip(rows[:k], cols[:k])))
        Is.append(list(rows[k:]))
        Js.append(list(cols[k:]))
    return Cs, Ms, Is, Js
