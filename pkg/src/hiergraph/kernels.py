"""Hot loops for weighted Louvain.

The graph is a symmetric CSR matrix ``(indptr, indices, weights)`` where a
diagonal entry holds twice the internal weight of an aggregated node, so that
``degree[i] == weights[indptr[i]:indptr[i+1]].sum()`` and ``two_m ==
degree.sum()``.

Each kernel exists twice: ``*_py`` is the plain-Python reference and the
unsuffixed name is the numba-compiled version (or the same function when numba
is disabled, see :mod:`hiergraph._accel`).
"""
import numpy as np

from hiergraph._accel import HAS_NUMBA, njit

# Gains closer than this are treated as ties.
GAIN_TOL = 1e-12


def _local_moving_py(indptr, indices, weights, degree, init_labels, order, gamma, two_m, max_sweeps):
    n = degree.shape[0]
    labels = init_labels.copy()
    if two_m <= 0.0:
        return labels, 0
    comm_tot = np.zeros(n)
    size = np.zeros(n, dtype=np.int64)
    for i in range(n):
        comm_tot[labels[i]] += degree[i]
        size[labels[i]] += 1
    neigh_w = np.full(n, -1.0)
    touched = np.empty(n, dtype=np.int64)
    sweeps = 0
    moved_any = True
    while moved_any and sweeps < max_sweeps:
        moved_any = False
        sweeps += 1
        for pos in range(order.shape[0]):
            i = order[pos]
            ci = labels[i]
            ki = degree[i]
            n_touched = 0
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j == i:
                    continue
                c = labels[j]
                if neigh_w[c] < 0.0:
                    neigh_w[c] = 0.0
                    touched[n_touched] = c
                    n_touched += 1
                neigh_w[c] += weights[p]

            comm_tot[ci] -= ki
            size[ci] -= 1
            scale = gamma * ki / two_m
            own_w = neigh_w[ci] if neigh_w[ci] > 0.0 else 0.0
            own_gain = own_w - scale * comm_tot[ci]

            best = -1
            best_gain = 0.0
            for t in range(n_touched):
                c = touched[t]
                if c == ci:
                    continue
                gain = neigh_w[c] - scale * comm_tot[c]
                if best < 0 or gain > best_gain + GAIN_TOL:
                    best = c
                    best_gain = gain
                elif abs(gain - best_gain) <= GAIN_TOL and c < best:
                    best = c
                    best_gain = gain

            target = ci
            target_gain = own_gain
            if best >= 0 and best_gain > own_gain + GAIN_TOL:
                target = best
                target_gain = best_gain
            if target_gain < -GAIN_TOL:
                # Isolating i (gain 0) beats every community on offer.
                for c in range(n):
                    if size[c] == 0:
                        target = c
                        break
            if target != ci:
                moved_any = True
            labels[i] = target
            comm_tot[target] += ki
            size[target] += 1

            for t in range(n_touched):
                neigh_w[touched[t]] = -1.0
    return labels, sweeps


def _modularity_py(indptr, indices, weights, labels, gamma):
    n = labels.shape[0]
    n_comm = 0
    for i in range(n):
        if labels[i] + 1 > n_comm:
            n_comm = labels[i] + 1
    internal = np.zeros(n_comm)
    total = np.zeros(n_comm)
    two_m = 0.0
    for i in range(n):
        ci = labels[i]
        for p in range(indptr[i], indptr[i + 1]):
            w = weights[p]
            two_m += w
            total[ci] += w
            if labels[indices[p]] == ci:
                internal[ci] += w
    if two_m <= 0.0:
        return 0.0
    q = 0.0
    for c in range(n_comm):
        q += internal[c] / two_m - gamma * (total[c] / two_m) ** 2
    return q


local_moving_py = _local_moving_py
modularity_py = _modularity_py
local_moving = njit(_local_moving_py)
modularity = njit(_modularity_py)

__all__ = ["HAS_NUMBA", "local_moving", "local_moving_py", "modularity", "modularity_py"]
