"""Fiber volume of p_f for the doubling map of the line, three ways.

The exact value for f(x) = 2x is 1/2 times the δ-ball volume. The adaptive
cell quadrature and the pushforward-mass oracle should both reproduce it.
"""
import numpy as np

from pullback_lab.bundles import PullbackBundle
from pullback_lab.geometry import euclidean
from pullback_lab.maps import linear
from pullback_lab.pullback import fiber_volume_pf, pushforward_density

R = euclidean(1, [-2.0], [2.0])
b = PullbackBundle(R, R, linear(R, [[2.0]]), 0.1)
for q in ([0.0], [0.5], [-1.1]):
    adaptive = fiber_volume_pf(b, q, normalized=True)
    oracle = pushforward_density(b, np.array(q), 0.005, base_orders=8000) / (2 * b.delta)
    print(f"q = {q[0]:5.2f}: adaptive {adaptive:.6f}, pushforward oracle {oracle:.4f}, exact 0.5")
