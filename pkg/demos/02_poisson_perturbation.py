"""First-order domain perturbation of a nonlinear Robin problem on the unit disk.

Solve lap phi = phi**2 with n.grad phi = -phi + 1 + x/2, then the linear
first-order problem for a boundary bump 1 + cos(2 theta)/2.  Direct solves
on bumped meshes confirm phi(delta) = phi0 + delta phi1 + O(delta**2).
"""

from defdom import build_disk_mesh, dbp

bc, bump = dbp.demo_problem(c=-1.0)
res = dbp.linearize_poisson_demo(bc, build_disk_mesh(1.0, 0.05), [2e-2, 1e-2, 5e-3, 2.5e-3], bump)

print(" delta      remainder")
for d, e in res.table:
    print(f" {d:.2e}   {e:.3e}")
print("observed orders:", ", ".join(f"{s:.3f}" for s in res.slopes()))
