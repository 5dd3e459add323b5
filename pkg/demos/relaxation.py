"""
Relaxation and the multiplierless update
========================================

The same instance is decoded four ways. Over-relaxed POCS moves further
along each projection. The multiplierless variant rounds the step to a
signed power of two so that a hardware stage needs only shifts and adds.
"""

from temrecon import (IDEAL, LAZAR, POCS, ShiftAddConfig, encode, EncoderConfig,
                      extract_samples, gram_exact, mse_bits, mse_db, random_signal, relaxed,
                      run, run_multiplierless)
from temrecon.kernels import lazar_cross_gram
from temrecon.recon import frame_bounds

x = random_signal(257, 0.5, rng_seed=4)
S = extract_samples(encode(x, EncoderConfig(d=0.152, close_period=True)))
G = gram_exact(S, IDEAL, 257.0)

###############################################################################
# The frame bounds of the normalized Gram give the contraction factor of
# plain POCS and the relaxation that minimizes it.

fb = frame_bounds(G, S)
print(f"A = {fb.A:.3f}, B = {fb.B:.3f}, |M1| = {fb.m1_norm:.3f}, best lambda = {fb.lambda_m:.3f}")

###############################################################################
# Ten iterations of each variant.

curves = {
    "lazar": run(S, lazar_cross_gram(S), LAZAR, 10, reference=x).mse,
    "pocs": run(S, G, POCS, 10, reference=x).mse,
    "pocs_relaxed(1.3)": run(S, G, relaxed(1.3), 10, reference=x).mse,
    "multiplierless": run_multiplierless(S, G, ShiftAddConfig.from_samples(S), 10,
                                         reference=x).mse,
}
for name, mse in curves.items():
    print(f"{name:>18s}: {float(mse_bits(mse_db(mse[10]))):6.2f} bits after 10 iterations")

###############################################################################
# The power-of-two step keeps the effective relaxation between 8/9 and 16/9.

out = run_multiplierless(S, G, ShiftAddConfig.from_samples(S), 10)
lo, hi = out.induced_lambda
print(f"induced relaxation in [{lo:.3f}, {hi:.3f}]")
