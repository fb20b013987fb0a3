"""
Efficiency curves
=================

Standard and rollback step counts for alpha options at each of n steps,
their ratio eta, and how eta/n settles towards (alpha - 1) / alpha.
"""

from fractions import Fraction

from agentgit import curve_point, emit_curves

print(emit_curves([2, 3], 6).decode())

for alpha in (2, 3, 4, 5):
    limit = Fraction(alpha - 1, alpha)
    gap = curve_point(alpha, 30).eta_over_n - limit
    print(f"alpha={alpha}: eta/n at n=30 is above {limit} by {float(gap):.2e}")

# eta grows roughly linearly in n
for n in (5, 10, 20, 21):
    print(f"eta(2, {n}) = {float(curve_point(2, n).eta):.6f}")
