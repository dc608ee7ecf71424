"""
Stopping cubes of an indicator
==============================

The sparse family behind the domination of the fractional maximal function
is produced by a stopping time: at stage k, keep the maximal dyadic cubes
where the fractional average exceeds a^k.  For one function with alpha = 0
in one dimension the ratio is a = 4.
"""
from fractions import Fraction

from sharpfrac import (ExponentData, GridFunction, RootSystem, build_sparse,
                       multilinear_maximal, sparse_domination_check, verify_sparse)
from sharpfrac.sparse import dumps

system = RootSystem.box(-8, 8, 6)
f = [GridFunction.from_callable(system, lambda x: ((x >= 0) & (x < 1)).astype(float))]
e = ExponentData.make(1, 0, [2])

S = build_sparse(f, e)
for k, cubes in S.stages.items():
    print(f"stage {k:+d} (a^k = {Fraction(4) ** k}):", [f"[{q.lower[0]}, {q.upper[0]})" for q in cubes])

# %%
# [0,2) has average 1/2 > 1/4, while [0,4) only reaches 1/4 and is not
# selected.  The first stage, [0,8), comes from the root-level bound: the
# window opens as soon as the top cubes satisfy a^k < avg <= 2 a^k.
print("sparse:", bool(verify_sparse(S)))
print(dumps(S))

# %%
# The maximal function against the sparse sum over the first stage set.
M = multilinear_maximal(f, e, shifts=[0]).values
print("M on [0,8) by unit cell:", M[system.num_cells // 2::system.num_cells // 16][:8])
print("domination ratio:", sparse_domination_check(f, e, GridFunction.constant(system)))
