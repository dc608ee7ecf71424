"""
Watching the weight exponent become sharp
=========================================

Power weights |x|^b with b close to the critical value make both the weight
characteristic and the operator norm blow up as eps -> 0.  When the rates
match, no smaller power of the characteristic can bound the operator.  Here
the rates are fitted on log-log axes for the maximal operator with
p = (4/3, 4), alpha = 1/2 (so q = 2), and for p = (2, 2).
"""
from fractions import Fraction

from sharpfrac import ExperimentConfig, ExponentData
from sharpfrac.sharpness import run_experiment

for theorem, p in (("T1", ["4/3", "4"]), ("T3", [2, 2])):
    e = ExponentData.make(1, Fraction(1, 2), p)
    rep = run_experiment(ExperimentConfig(e, theorem, mesh_level=10))
    print(f"{theorem}: p = {', '.join(map(str, e.p))}, q = {e.q}")
    for row in rep.rows[::3]:
        print(f"  eps={row['eps']:<10g} [w]={row['a_Pq']:<10.4g} |M f|={row['lhs_norm']:.4g}")
    for f in rep.fits:
        print(f"  {f.name:<10} exponent {f.exponent:+.3f}  target {f.target:+.3f}  {'ok' if f.passed else 'off'}")
    print(f"  LHS / bound varies by a factor {rep.checks['saturation']['factor']:.3f}")

# %%
# The same sweep for the fractional integral.  Its norm grows at the same
# rate, but the pointwise ratio M/I moves with eps, so this run is where the
# saturation story is least tidy.
e = ExponentData.make(1, Fraction(1, 2), ["4/3", "4"])
rep = run_experiment(ExperimentConfig(e, "T2", mesh_level=10))
lhs = {f.name: f for f in rep.fits}["lhs_norm"]
d = rep.checks["domination"]
print(f"T2: |I f| exponent {lhs.exponent:+.3f}, M/I between {d['min']:.3f} and {d['max']:.3f}")
