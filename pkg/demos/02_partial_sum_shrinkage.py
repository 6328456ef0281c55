"""
Shrinkage of in-sample probabilities
====================================

When the divergence penalty only covers the responses S seen in the data,
the best out-of-sample response collects the leftover mass.  For KL every
in-sample probability then drops to at most q_i / e.  SquaredPO, whose
generator is minimised at 1, does not force this.
"""

import numpy as np

from fdpo import generators, simplex

kl = generators.get("kl")
sq = generators.get("squaredpo")

# Two responses, S = {0}, equal rewards: the textbook case.
inst = simplex.SimplexInstance(np.array([0.0, 0.0]), np.array([0.5, 0.5]), 1.0, (0,))
opt = simplex.solve_partial_convex(inst, kl)
print("KL optimum:", opt.point(), "case:", opt.case.value)
print("q_0 / e   :", 0.5 * np.exp(-1))

# Four responses, the two in S tie with the best out-of-sample reward.
r = np.array([1.0, 1.0, 1.0, 0.0])
q = np.array([0.3, 0.3, 0.2, 0.2])
inst = simplex.SimplexInstance(r, q, 0.5, (0, 1))
p_kl = simplex.solve_partial_convex(inst, kl).point()
p_sq = simplex.solve_partial_numeric(inst, sq)
print("\nreference        ", q)
print("KL partial opt   ", np.round(p_kl, 6))
print("SquaredPO partial", np.round(p_sq, 6))
print("KL bound holds:", simplex.check_displacement_bound(inst, kl, p_kl))

# With a penalty on every response (the full problem) nothing collapses.
full = simplex.SimplexInstance(r, q, 0.5)
print("\nKL full opt      ", np.round(simplex.solve_full(full, kl), 6))
print("closed form      ", np.round(simplex.closed_form_kl(full), 6))

# Larger in-sample rewards push the solution to the interior-multiplier case.
inst = simplex.SimplexInstance(np.array([3.0, 2.5, 0.0, 0.0]), q, 0.5, (0, 1))
opt = simplex.solve_partial_convex(inst, kl)
print("\nhigh in-sample rewards:", opt.case.value, "mu =", round(opt.mu, 6), "p =", np.round(opt.point(), 6))
