"""Compare f1 with a centred difference of f0 across offsets.

Pass a mesh size to trade accuracy for time; 0.035 brings every offset
under 1% and takes several minutes.
"""

import math
import sys

from defdom import bubble

h = float(sys.argv[1]) if len(sys.argv) > 1 else 0.06
cfg = bubble.CaseConfig(Ca=0.2, V_B=math.pi * 0.2 ** 2, L=3.0, mesh_h=h)
rep = bubble.sensitivity_validation(cfg, 1e-3, [0.0, 0.05, 0.10, 0.15])

print(" eps      f0          f1          FD          mismatch")
for r in rep.rows:
    print(f" {r.eps:.2f}  {r.f0:10.5f}  {r.f1:10.5f}  {r.dfd_eps:10.5f}  {r.mismatch:.2e}")
