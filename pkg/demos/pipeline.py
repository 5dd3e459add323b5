"""
A six-stage FIR pipeline
========================

In hardware the iteration becomes a chain of stages, each seeing only
the nearest 2L + 1 intervals. Gram entries come from a small table of
the kernel's second antiderivative, indexed by quantized times.
"""

from temrecon import (EncoderConfig, PipelineConfig, adder_count, build_table, encode,
                      extract_samples, mse_bits, mse_db, quantize, random_signal, pipeline_run)
from temrecon.kernels import LowpassKernel

kernel = LowpassKernel("cosine_rolloff", 1.4)
step = 2.0 ** -12

x = random_signal(257, 0.5, rng_seed=2)
events = quantize(encode(x, EncoderConfig(d=0.152, close_period=True)), step)
S = extract_samples(events)

###############################################################################
# The table covers every lag a window of 17 neighbours can reach.

table = build_table(kernel, step, 48.0, 1.25)
print(f"table: {table.values.size} entries, {table.nbytes / 1024:.1f} KiB")

res = pipeline_run(S, PipelineConfig(17, 6, kernel=kernel, table=table), reference=x)
for n, m in enumerate(res.mse):
    print(f"stage {n}: {float(mse_bits(mse_db(m))):5.2f} bits")

###############################################################################
# The audited adder count of the run matches the closed form.

rep = res.adder_report
print(f"adders: audited {rep['total']}, formula {adder_count(17, 6)}")
