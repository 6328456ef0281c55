"""
Which generators avoid likelihood displacement?
===============================================

Two numerical properties of a generating function f decide how it behaves
as a preference-optimisation loss:

* whether f'(t) runs off to -infinity as t -> 0 (then every optimum of the
  regularised problem is interior, and the loss takes the f-DPO form), and
* whether the global minimiser of f sits at or above 1 (then the optimum
  is never forced to shrink in-sample probabilities).

Run with ``python3 demos/01_taxonomy.py``.
"""

import numpy as np

from fdpo import classifier, generators

# The nine catalog functions and their classification.
rows = classifier.classify_taxonomy()
print(f"{'id':<11} {'convex':>6} {'inducing':>9} {'resistant':>10} {'argmin':>10}")
for r in rows:
    print(f"{r.id:<11} {str(r.convex):>6} {str(r.inducing):>9} {str(r.resistant):>10} {r.argmin_location:>10.6f}")

# The evidence behind a verdict is kept: f' sampled at t = 1e-1 ... 1e-12.
kl = generators.get("kl")
v = classifier.is_dpo_inducing(kl)
print("\nKL f'(t) near zero:", ", ".join(f"{fp:.2f}" for _, fp in v.evidence[-4:]), "->", v.reason)

chi2 = generators.get("chi2")
v = classifier.is_dpo_inducing(chi2)
print("chi^2 f'(t) near zero:", ", ".join(f"{fp:.6f}" for _, fp in v.evidence[-4:]), "->", v.reason)

# The alpha family switches at alpha = 0.
for a in (-1.0, -0.25, 0.25, 0.5, 2.0):
    print(f"alpha={a:+.2f} inducing: {classifier.is_dpo_inducing(generators.alpha_divergence(a)).inducing}")

# Where do the minima sit?  KL at 1/e, chi-PO at the omega constant W(1).
for gid in ("kl", "chipo", "squaredpo"):
    am = classifier.argmin_f(generators.get(gid))
    print(f"argmin {gid:<9} = {am.location:.10f}")
print("e^-1 =", np.exp(-1))
