"""How many states does a long filter really need?

We build a filter from a hidden 6-state recurrence, look at the singular
values of its Hankel matrix, and read off the order. A second filter made of
damped sinusoids shows a spectrum that decays without a sharp cliff.
"""

import numpy as np

from ssmdistill import aak_lower_bound, estimate_order, hankel_spectrum, synth_bank

L = 256
planted, truth = synth_bank("planted-ssm", 1, L, order=6, seed=3)
spec = hankel_spectrum(planted[0])
order, flag = estimate_order(spec, rel_tol=1e-8)

print("planted 6-state filter")
print("  leading singular values:", np.array2string(spec.sigmas[:9], precision=2))
print(f"  estimated order at 1e-8: {order} (flag={flag})")
print(f"  true state size:         {truth[0].d}")

# A rougher target. The decay tells us what any order-d fit can hope for.
rough, _ = synth_bank("damped-sinusoid", 1, L, order=24, seed=0)
spec = hankel_spectrum(rough[0])
print("\norder-24 damped-sinusoid filter")
for d in (4, 8, 16, 24):
    print(f"  best Hankel-norm error at order {d:2d} >= {aak_lower_bound(spec, d):.3e}")
