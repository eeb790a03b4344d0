"""
How far back does the ring remember?
====================================

Random bits go in one per interval; a linear readout then tries to recover
the bit j intervals back (memory) and the parity of the last j bits. Chance
level is 50 %.
"""

from magnonrc.aor import AorConfig
from magnonrc.harness import memory_benchmark

res = memory_benchmark(AorConfig(dt=100e-15), j_max=4, n_intervals=120, seed=1)
for j, mem, par, p in zip(res.j, res.memory, res.parity, res.memory_p):
    print(f"j={j}: memory {mem:5.1f} % (p={p:.1e})  parity {par:5.1f} %")
