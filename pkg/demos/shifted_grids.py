"""
Covering any interval by a shifted dyadic cube
==============================================

A fixed dyadic grid is bad at covering intervals that straddle a coarse
grid point: [-1/100, 1/100) sits in no standard dyadic interval shorter
than the whole line.  Shifting every level by 1/3 (with alternating sign)
fixes this.  Among the standard grid and the shifted one, some cube
contains the interval and is at most 6 times longer.
"""
from fractions import Fraction

import numpy as np

from sharpfrac import covering_cube

lo, side = Fraction(-1, 100), Fraction(1, 50)
t, q = covering_cube(lo, side)
print(f"[{lo}, {lo + side}) lies in [{q.lower[0]}, {q.upper[0]}) of grid t={t[0]}, ratio {q.side / side}")

# %%
# The ratio over many random intervals.  Everything is exact rational
# arithmetic, so membership is never decided by rounding.
rng = np.random.default_rng(0)
ratios = []
for _ in range(2000):
    lo = Fraction(int(rng.integers(-10**5, 10**5)), int(rng.integers(1, 997)))
    side = Fraction(int(rng.integers(1, 500)), int(rng.integers(1, 500)))
    _, q = covering_cube(lo, side)
    assert q.lower[0] <= lo and lo + side <= q.upper[0]
    ratios.append(float(q.side / side))
print(f"max ratio {max(ratios):.4f}, median {np.median(ratios):.3f}")
