"""Central finite differences for vectorized functions of chart points."""
from __future__ import annotations

import numpy as np

# offsets and weights of the first-derivative central stencils
_STENCILS = {
    2: (np.array([-1.0, 1.0]), np.array([-0.5, 0.5])),
    4: (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0),
    6: (np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]),
        np.array([-1.0, 9.0, -45.0, 45.0, -9.0, 1.0]) / 60.0),
}


def default_step(order=4, scale=1.0):
    """Step balancing truncation and rounding error: eps^(1/(order+1)) * scale."""
    return np.finfo(float).eps ** (1.0 / (order + 1)) * scale


def stencil(order):
    if order not in _STENCILS:
        raise ValueError(f"unsupported stencil order {order}; use 2, 4 or 6")
    return _STENCILS[order]


def stencil_width(order=4, h=None):
    h = default_step(order) if h is None else h
    offs, _ = stencil(order)
    return float(np.max(np.abs(offs))) * h


def jacobian(func, x, h=None, order=4, axes=None):
    """Partial derivatives of ``func`` at the rows of ``x``.

    func maps (N, d) -> (N, *shape). Returns (N, *shape, len(axes)).
    ``h`` may be a scalar or a per-axis array.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    axes = list(range(d)) if axes is None else list(axes)
    h = default_step(order) if h is None else h
    hs = np.broadcast_to(np.asarray(h, dtype=float), (d,))
    offs, wts = stencil(order)
    s = len(offs)
    # one big evaluation: (N, A, S, d)
    pts = np.repeat(x[:, None, None, :], len(axes), axis=1).repeat(s, axis=2)
    for a, ax in enumerate(axes):
        pts[:, a, :, ax] += offs * hs[ax]
    vals = np.asarray(func(pts.reshape(-1, d)))
    vals = vals.reshape((n, len(axes), s) + vals.shape[1:])
    der = np.tensordot(vals, wts, axes=([2], [0]))  # (N, A, *shape)
    der = der / hs[axes].reshape((1, len(axes)) + (1,) * (der.ndim - 2))
    return np.moveaxis(der, 1, -1)
