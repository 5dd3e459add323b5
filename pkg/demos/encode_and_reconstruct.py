"""
Encoding a signal and getting it back
=====================================

A random periodic signal goes through the Schmitt-trigger modulator. The
switching instants are all we keep. POCS then rebuilds the signal from
the integrals they imply.
"""

import numpy as np

from temrecon import (IDEAL, POCS, EncoderConfig, calibrate_d, encode, extract_samples,
                      gram_exact, mse_bits, mse_db, random_signal, run)
from temrecon.encoder import density
from temrecon.recon import Reconstructor

# one period of 257 samples, amplitude below 0.5
x = random_signal(257, 0.5, rng_seed=0)

# pick the threshold so that switching runs at 1.5 times the Nyquist rate
d = calibrate_d([random_signal(257, 0.5, s) for s in range(1000, 1004)], 1.5)
events = encode(x, EncoderConfig(d=d, close_period=True))
S = extract_samples(events)
print(f"d = {d:.4f}: {len(events)} switching instants, {S.N} intervals, "
      f"density {density(S):.3f}")

###############################################################################
# Each interval carries the integral of x over it. POCS projects onto one
# interval constraint after another until all of them hold.

G = gram_exact(S, IDEAL, 257.0)
res = run(S, G, POCS, 20, reference=x)
for n in (0, 1, 5, 10, 20):
    print(f"iteration {n:2d}: {float(mse_bits(mse_db(res.mse[n]))):6.2f} bits")

###############################################################################
# Run to convergence and the error drops to rounding level.

res = run(S, G, POCS, 5000, tol=1e-12)
y = Reconstructor(S).signal(res.state.c)
t = np.linspace(0, 257, 2001)
print(f"converged after {res.iterations} iterations, "
      f"max error {np.max(np.abs(y(t) - x(t))):.2e}")
