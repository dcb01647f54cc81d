"""Increasing multi-indices and the sign tables behind wedge, d and pullback."""
from __future__ import annotations

from functools import lru_cache
from itertools import combinations

import numpy as np


@lru_cache(maxsize=None)
def multi_indices(dim, k):
    return tuple(combinations(range(dim), k))


@lru_cache(maxsize=None)
def index_of(dim, k):
    return {I: n for n, I in enumerate(multi_indices(dim, k))}


def n_components(dim, k):
    return len(multi_indices(dim, k))


def merge_sign(a, b):
    """Sign of the permutation sorting the concatenation a+b (0 if they overlap)."""
    if set(a) & set(b):
        return 0
    inv = sum(1 for i in a for j in b if i > j)
    return -1 if inv % 2 else 1


@lru_cache(maxsize=None)
def wedge_table(dim, ka, kb):
    """Arrays (ia, ib, ic, sign) with (a^b)[ic] += sign * a[ia] * b[ib]."""
    ia, ib, ic, sg = [], [], [], []
    target = index_of(dim, ka + kb)
    for n, I in enumerate(multi_indices(dim, ka)):
        for m, J in enumerate(multi_indices(dim, kb)):
            s = merge_sign(I, J)
            if s:
                ia.append(n)
                ib.append(m)
                ic.append(target[tuple(sorted(I + J))])
                sg.append(s)
    return (np.array(ia, dtype=int), np.array(ib, dtype=int),
            np.array(ic, dtype=int), np.array(sg, dtype=float))


@lru_cache(maxsize=None)
def derivative_table(dim, k):
    """Arrays (out, axis, src, sign): (d a)[out] += sign * d_axis a[src]."""
    out, axis, src, sg = [], [], [], []
    src_idx = index_of(dim, k)
    for n, K in enumerate(multi_indices(dim, k + 1)):
        for p, j in enumerate(K):
            rest = K[:p] + K[p + 1:]
            out.append(n)
            axis.append(j)
            src.append(src_idx[rest])
            sg.append(-1.0 if p % 2 else 1.0)
    return (np.array(out, dtype=int), np.array(axis, dtype=int),
            np.array(src, dtype=int), np.array(sg, dtype=float))


def scatter(values, index, size):
    """Sum columns of ``values`` (N, P) into ``size`` slots given by ``index``."""
    out = np.zeros(values.shape[:-1] + (size,))
    for j in range(size):
        sel = index == j
        if np.any(sel):
            out[..., j] = values[..., sel].sum(axis=-1)
    return out


def minors(mat, k):
    """All k x k minors of a batch of matrices.

    mat: (N, r, c). Returns (N, C(r,k), C(c,k)) with rows/columns on
    increasing multi-indices.
    """
    n, r, c = mat.shape
    if k == 0:
        return np.ones((n, 1, 1))
    if k == 1:
        return mat.copy()
    rows = np.array(multi_indices(r, k), dtype=int)
    cols = np.array(multi_indices(c, k), dtype=int)
    if k == 2:
        a = mat[:, rows[:, 0][:, None], cols[:, 0][None, :]]
        b = mat[:, rows[:, 0][:, None], cols[:, 1][None, :]]
        cc = mat[:, rows[:, 1][:, None], cols[:, 0][None, :]]
        dd = mat[:, rows[:, 1][:, None], cols[:, 1][None, :]]
        return a * dd - b * cc
    sub = mat[:, rows[:, None, :, None], cols[None, :, None, :]]
    return np.linalg.det(sub)

