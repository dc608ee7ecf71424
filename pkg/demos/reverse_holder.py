"""
Reverse Hölder with the sharp exponent
======================================

A weight with finite Fujii-Wilson constant improves its own integrability:
averages of w^r with r = 1 + 1/(tau [w]_inf) are controlled by twice the
average of w.  The singular weights |x|^(eps-1) have A_inf constant of
order 1/eps, and the exponent gain shrinks accordingly.
"""
from fractions import Fraction

from sharpfrac import (CubeFamily, HomogeneousCore, RootSystem, a_infty_constant, discretize_power,
                       reverse_holder_check)

level = 10
system = RootSystem.box(-1, 1, level)
fam = CubeFamily(system)

# %%
# On the mesh, cubes near the origin only see a clipped spike.  The
# homogeneous core replaces the cubes below a small radius by the exact
# geometric tail of the power, which recovers the 1/eps growth.
core = HomogeneousCore(Fraction(2) ** (6 - level))
for k in range(2, 9):
    eps = 2.0**-k
    w = discretize_power(eps - 1, system)
    plain = a_infty_constant(w, fam)
    full = a_infty_constant(w, fam, core, eps - 1)
    res = reverse_holder_check(w, fam, a_infty=full)
    print(f"eps=2^-{k}: [w]_inf mesh={plain:6.3f} core={full:7.3f} eps*core={eps * full:.3f}  "
          f"r-1={res.r - 1:.2e}  worst ratio={res.worst_ratio:.6f}")
