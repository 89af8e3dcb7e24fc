"""numba kernels. Loop order mirrors ``_np`` so both paths agree bit-for-bit."""
import numpy as np
from numba import njit


@njit(cache=True)
def pairwise_dist(a, b):
    na, nb = a.shape[0], b.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        for j in range(nb):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            dz = a[i, 2] - b[j, 2]
            out[i, j] = np.sqrt(dx * dx + dy * dy + dz * dz)
    return out


@njit(cache=True)
def pairwise_sqdist(a, b):
    na, nb = a.shape[0], b.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        for j in range(nb):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            dz = a[i, 2] - b[j, 2]
            out[i, j] = dx * dx + dy * dy + dz * dz
    return out


@njit(cache=True)
def directed_min_dist(a, b):
    na, nb = a.shape[0], b.shape[0]
    out = np.empty(na)
    for i in range(na):
        best = np.inf
        for j in range(nb):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            dz = a[i, 2] - b[j, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
        out[i] = np.sqrt(best)
    return out


@njit(cache=True)
def mutual_min_dist(a, b):
    na, nb = a.shape[0], b.shape[0]
    da = np.full(na, np.inf)
    db = np.full(nb, np.inf)
    for i in range(na):
        ax, ay, az = a[i, 0], a[i, 1], a[i, 2]
        best = np.inf
        for j in range(nb):
            dx = ax - b[j, 0]
            dy = ay - b[j, 1]
            dz = az - b[j, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
            if d < db[j]:
                db[j] = d
        da[i] = best
    return np.sqrt(da), np.sqrt(db)


@njit(cache=True)
def left_sum(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i]
    return s


@njit(cache=True)
def farthest_point_sample(xyz, n, start=0):
    npts = xyz.shape[0]
    k = min(n, npts)
    order = np.empty(k, dtype=np.int64)
    mind = np.full(npts, np.inf)
    cur = start
    for i in range(k):
        order[i] = cur
        mind[cur] = -1.0
        best = -np.inf
        nxt = 0
        for j in range(npts):
            if mind[j] >= 0.0:
                dx = xyz[cur, 0] - xyz[j, 0]
                dy = xyz[cur, 1] - xyz[j, 1]
                dz = xyz[cur, 2] - xyz[j, 2]
                d = dx * dx + dy * dy + dz * dz
                if d < mind[j]:
                    mind[j] = d
            if mind[j] > best:
                best = mind[j]
                nxt = j
        cur = nxt
    if n <= npts:
        return order
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = order[i % npts]
    return out


@njit(cache=True)
def ball_query(xyz, center_idx, radius, m):
    r2 = radius * radius
    nc = center_idx.shape[0]
    npts = xyz.shape[0]
    out = np.empty((nc, m), dtype=np.int64)
    best = np.empty(m, dtype=np.float64)
    for c in range(nc):
        cx = xyz[center_idx[c], 0]
        cy = xyz[center_idx[c], 1]
        cz = xyz[center_idx[c], 2]
        cnt = 0
        # insertion into a sorted buffer of the m nearest; scanning in index
        # order with a strict comparison keeps ties ordered by index
        for j in range(npts):
            dx = xyz[j, 0] - cx
            dy = xyz[j, 1] - cy
            dz = xyz[j, 2] - cz
            d = dx * dx + dy * dy + dz * dz
            if d > r2 or (cnt == m and d >= best[m - 1]):
                continue
            k = cnt if cnt < m else m - 1
            while k > 0 and best[k - 1] > d:
                if k < m:
                    best[k] = best[k - 1]
                    out[c, k] = out[c, k - 1]
                k -= 1
            best[k] = d
            out[c, k] = j
            if cnt < m:
                cnt += 1
        if cnt == 0:
            for j in range(m):
                out[c, j] = center_idx[c]
        else:
            for j in range(cnt, m):
                out[c, j] = out[c, 0]
    return out


@njit(cache=True)
def dbscan(xyz, eps, min_pts):
    npts = xyz.shape[0]
    nbr = pairwise_dist(xyz, xyz) <= eps
    core = np.zeros(npts, dtype=np.bool_)
    for i in range(npts):
        if nbr[i].sum() >= min_pts:
            core[i] = True
    labels = np.full(npts, -1, dtype=np.int64)
    visited = np.zeros(npts, dtype=np.bool_)
    queue = np.empty(npts, dtype=np.int64)
    cluster = 0
    for i in range(npts):
        if visited[i] or not core[i]:
            continue
        visited[i] = True
        labels[i] = cluster
        queue[0] = i
        head, tail = 0, 1
        while head < tail:
            p = queue[head]
            head += 1
            for q in range(npts):
                if not nbr[p, q]:
                    continue
                if labels[q] == -1:
                    labels[q] = cluster
                if core[q] and not visited[q]:
                    visited[q] = True
                    queue[tail] = q
                    tail += 1
        cluster += 1
    return labels


@njit(cache=True)
def scatter_add_rows(target, idx, src):
    for k in range(idx.shape[0]):
        r = idx[k]
        for c in range(src.shape[1]):
            target[r, c] += src[k, c]
    return target
