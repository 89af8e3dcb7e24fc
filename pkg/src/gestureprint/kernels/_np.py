"""Pure-numpy kernels. Same contracts (and bit-identical results) as ``_nb``."""
import numpy as np


def pairwise_dist(a, b):
    dx = a[:, 0][:, None] - b[:, 0][None, :]
    dy = a[:, 1][:, None] - b[:, 1][None, :]
    dz = a[:, 2][:, None] - b[:, 2][None, :]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def pairwise_sqdist(a, b):
    dx = a[:, 0][:, None] - b[:, 0][None, :]
    dy = a[:, 1][:, None] - b[:, 1][None, :]
    dz = a[:, 2][:, None] - b[:, 2][None, :]
    return dx * dx + dy * dy + dz * dz


def directed_min_dist(a, b):
    """For each row of ``a`` the Euclidean distance to its nearest row of ``b``."""
    # sqrt is monotone and correctly rounded, so taking it after the min is exact
    return np.sqrt(pairwise_sqdist(a, b).min(axis=1))


def mutual_min_dist(a, b):
    """Nearest-neighbour distances in both directions from one distance matrix."""
    d = pairwise_sqdist(a, b)
    return np.sqrt(d.min(axis=1)), np.sqrt(d.min(axis=0))


def left_sum(x):
    # cumsum is strictly sequential, unlike np.sum's pairwise reduction
    if x.shape[0] == 0:
        return 0.0
    return float(np.cumsum(x)[-1])


def farthest_point_sample(xyz, n, start=0):
    npts = xyz.shape[0]
    k = min(n, npts)
    order = np.empty(k, dtype=np.int64)
    mind = np.full(npts, np.inf)
    cur = start
    for i in range(k):
        order[i] = cur
        d = pairwise_sqdist(xyz[cur:cur + 1], xyz)[0]
        np.minimum(mind, d, out=mind)
        mind[order[: i + 1]] = -1.0
        cur = int(np.argmax(mind))
    if n <= npts:
        return order
    return order[np.arange(n) % npts]


def ball_query(xyz, center_idx, radius, m):
    r2 = radius * radius
    d2 = pairwise_sqdist(xyz[center_idx], xyz)
    out = np.empty((center_idx.shape[0], m), dtype=np.int64)
    for c in range(center_idx.shape[0]):
        order = np.argsort(d2[c], kind="stable")
        inside = order[d2[c, order] <= r2][:m]
        if inside.shape[0] == 0:
            out[c, :] = center_idx[c]
        else:
            out[c, : inside.shape[0]] = inside
            out[c, inside.shape[0]:] = inside[0]
    return out


def dbscan(xyz, eps, min_pts):
    """Density clustering; labels -1 for noise, clusters numbered in scan order."""
    npts = xyz.shape[0]
    nbr = pairwise_dist(xyz, xyz) <= eps
    core = nbr.sum(axis=1) >= min_pts
    labels = np.full(npts, -1, dtype=np.int64)
    visited = np.zeros(npts, dtype=bool)
    cluster = 0
    for i in range(npts):
        if visited[i] or not core[i]:
            continue
        visited[i] = True
        labels[i] = cluster
        queue = [i]
        head = 0
        while head < len(queue):
            p = queue[head]
            head += 1
            for q in np.flatnonzero(nbr[p]):
                if labels[q] == -1:
                    labels[q] = cluster
                if core[q] and not visited[q]:
                    visited[q] = True
                    queue.append(int(q))
        cluster += 1
    return labels


def scatter_add_rows(target, idx, src):
    np.add.at(target, idx, src)
    return target
