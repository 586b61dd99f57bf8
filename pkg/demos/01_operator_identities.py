"""Boundary calculus on a discretised circle.

Integrating D_S phi over a closed curve telescopes to nothing, so the
discrete residual measures geometry error alone.  D_S 1 tested weakly
recovers the mean curvature vector.
"""

import numpy as np

from defdom import selftest, surface

rng = np.random.default_rng(0)

for c in selftest.check_volume_identities(rng):
    print(c.line())


def phi(x):
    return 1.0 + 0.4 * x[0] ** 2 - 0.3 * x[0] * x[1] + 0.2 * x[1] ** 3


print("\n n   |oint D_S phi|")
for n in (16, 32, 64, 128):
    r = surface.check_stokes_boundary(phi, selftest.disk(n))
    print(f"{n:4d}  {np.linalg.norm(r):.3e}")

print("\n n   curvature L2 error (radius 0.7)")
for n in (16, 32, 64):
    print(f"{n:4d}  {surface.curvature_error(selftest.disk(n, 0.7), (0, 0), 0.7):.3e}")
