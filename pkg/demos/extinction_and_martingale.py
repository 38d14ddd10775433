"""Extinction and the normalized population in an i.i.d. random environment.

Each generation flips a fair coin between two offspring laws: everyone has
exactly two children, or everyone independently has none (1/4) or two (3/4).
The environment is fixed once (quenched) and the population is simulated many
times on that one environment.

Run with ``python3 demos/extinction_and_martingale.py``.
"""

import numpy as np

from bpre import EnvironmentProcess, atom_and_moments, classify, explicit, extinction_prob, sample_path, simulate_W

proc = EnvironmentProcess("iid", (explicit({2: 1.0}), explicit({0: 0.25, 2: 0.75})), weights=[0.5, 0.5])

cls = classify(proc)
print(f"drift mu = E log m = {cls.mu:.4f}  (supercritical: {cls.supercritical})")
print(f"E[Z_1 log Z_1 / m] = {cls.kesten_stigum_estimate:.4f}  (MC {cls.kesten_stigum_mc:.4f})")

# extinction depends on the realized environment; a few paths show the spread
for seed in (10, 11, 12, 13):
    path = sample_path(proc, 500, seed)
    ext = extinction_prob(path)
    print(f"path {seed}: first states {path.state_ids[:12].tolist()}  q = {ext.q:.6f}")

path = sample_path(proc, 500, 0)
sample = simulate_W(path, 100_000, 30, master_seed=1)
mom = atom_and_moments(sample)
print(f"\nW_30 over {sample.replicas} replicas on path 0:")
print(f"  mean {mom.mean:.4f} +- {mom.stderr_mean:.4f}   (martingale: E W = 1)")
print(f"  extinct fraction {mom.atom:.4f} +- {mom.stderr_atom:.4f}   vs q = {extinction_prob(path).q:.4f}")
print(f"  variance {mom.var:.4f}")

# E W_k stays at 1 generation by generation
print("  E W_k, k = 0, 5, ..., 30:", np.round(sample.gen_mean[::5], 4).tolist())
