"""
Same loss from either problem
=============================

For a DPO-inducing f the optimum of the full problem and of the
partial-sum problem imply the same reward gaps between in-sample responses,
beta f'(p_w/q_w) - beta f'(p_l/q_l) = r_w - r_l, so both lead to the same
f-DPO loss.  This script checks it on random instances and then looks at
the losses themselves.
"""

import warnings

import numpy as np

from fdpo import classifier, generators, losses, simplex
from fdpo._rng import make_rng

rng = make_rng(0)
for g in generators.catalog():
    if not classifier.is_dpo_inducing(g).inducing:
        continue
    worst = 0.0
    for _ in range(20):
        inst = simplex.random_instance(rng, 4, s_size=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pf = simplex.solve_full(simplex.SimplexInstance(inst.r, inst.q, inst.beta), g)
            pp = simplex.solve_partial_numeric(inst, g)
        gf, gp = simplex.implied_gaps(inst, g, pf), simplex.implied_gaps(inst, g, pp)
        worst = max(worst, max(abs(gf[k] - gp[k]) for k in gf))
    print(f"{g.id:<10} largest gap disagreement over 20 instances: {worst:.1e}")

# f-DPO with KL is DPO; with the squared log it is SquaredPO.
t = losses.TripleLogProbs(np.array([-1.0, -2.0]), np.array([-1.2, -1.5]), np.array([-2.0, -3.0]), np.array([-1.8, -2.5]))
print("\nDPO        ", losses.dpo_loss(t, 0.1).value)
print("f-DPO (KL) ", losses.fdpo_loss(t, generators.get("kl"), 0.1).value)
print("SquaredPO  ", losses.squaredpo_loss(t, 0.1).value)
print("f-DPO (sq) ", losses.fdpo_loss(t, generators.get("squaredpo"), 0.1).value)

# The adaptive coefficient: beta over the policy/reference ratio, clipped at e^50.
for d in (1.0, 0.0, -1.0, -5.0, -60.0):
    print(f"log-ratio {d:+6.1f} -> beta_theta / beta = {losses.adaptive_beta(d, 1.0):.4g}")
