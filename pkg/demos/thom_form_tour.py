"""Build the Thom form of the tangent bundle of the sphere and look at it.

Prints the fiber integral at a few base points for three fiber rules, the
size of dω at shrinking stencil steps, and the profile derivative that
carries the fiber top-degree term.
"""
import numpy as np

from pullback_lab.bundles import fiber_integrate, tangent_bundle
from pullback_lab.forms import numeric_derivative
from pullback_lab.geometry import sphere_chart
from pullback_lab.thom import build_bump, thom_form

S = sphere_chart(margin=0.3)
b = tangent_bundle(S, 0.5)
bump = build_bump(0.4, 2)
omega = thom_form(b, bump)
print(f"bump: delta0 = {bump.delta0}, normalization c = {bump.c_norm:.6f}")

x = np.array([[0.6, 0.0], [np.pi / 2, 1.0], [2.4, 4.0]])
for nr, na in [(12, 24), (24, 48), (48, 96)]:
    vals = fiber_integrate(b, omega, nr, na)(x)[:, 0]
    print(f"fiber rule {nr:2d}x{na:<3d} integral - 1: {np.array2string(vals - 1, precision=2)}")

rng = np.random.default_rng(0)
z = np.column_stack([rng.uniform(0.7, 2.4, 20), rng.uniform(0, 6, 20), rng.uniform(-0.25, 0.25, (20, 2))])
for h in (4e-3, 2e-3, 1e-3):
    d = numeric_derivative(omega, h=h)(z)
    print(f"stencil step {h:.0e}: max |dω| = {np.max(np.abs(d)):.2e}")

s = np.linspace(0, 0.08, 5)
print("phi''(s) on [0, delta0^2/2]:", np.array2string(bump.derivative(2, s), precision=3))
