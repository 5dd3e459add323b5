"""
When the Lazar-Toth iteration stops contracting
===============================================

On a grid whose intervals alternate between 1 + 2 delta and 1 - 2 delta
the iteration operator is block diagonal in frequency. Its worst-case
gain h(delta) crosses 1 near delta = 0.351.
"""

import numpy as np

from temrecon.spectral import delta0, lazar_threshold, two_periodic_detF, two_periodic_Mnorm

for delta in (0.0, 0.1, 0.2, 0.3, 0.35, 0.4, 0.45):
    w = np.linspace(0, np.pi, 1000)
    det = np.min(np.abs(two_periodic_detF(delta, w)))
    print(f"delta {delta:.2f}: h = {two_periodic_Mnorm(delta):.4f}, min |det F| = {det:.4f}")

###############################################################################
# The root of h(delta) = 1, and the longest interval it allows.

d0 = delta0()
print(f"delta0 = {d0:.5f}, longest interval {lazar_threshold():.4f}")

###############################################################################
# det F never vanishes, so the samples still determine the signal even
# when the Lazar iteration fails to contract.

print(f"det F at the band edge, delta = 0.49: {abs(two_periodic_detF(0.49, 0.0)):.4f}")
