"""The law of the martingale limit W for geometric offspring.

Geometric(0.6) offspring make the generating function linear fractional, so
the limit is known exactly: an atom q = 2/3 at zero plus the density
a^2 exp(-a x) with a = 1/3. This script recovers that density three ways and
compares each with the exact answer.

Run with ``python3 demos/density_of_the_limit.py``.
"""

import numpy as np

from bpre import (EnvironmentPath, build_grid, compare, extinction_prob, geometric, invert_derivative,
                  invert_direct, kde, quenched_psi, simulate_W)

path = EnvironmentPath.constant(geometric(0.6), 200)
q = extinction_prob(path).q
a = 1 - q
exact_psi = lambda t: q + a * a / (a - 1j * t)
exact_f = lambda x: a * a * np.exp(-a * x)
print(f"q = {q:.12f}")

t = np.array([0.5, 2.0, 10.0, 50.0])
print("\npsi(t) by composition vs closed form")
for ti, v in zip(t, quenched_psi(path, t)):
    print(f"  t = {ti:5.1f}   {v:.8f}   error {abs(v - exact_psi(ti)):.1e}")

grid = build_grid(path, T=200, dt=0.05, tail_eps=1e-5)
x = np.linspace(0, 20, 2001)
direct = invert_direct(grid, q, x)
deriv = invert_derivative(grid, x)
sample = simulate_W(path, 200_000, 30, master_seed=3)
smooth = kde(sample, x_grid=x)

print("\nL1 / sup error against a^2 exp(-a x) on [0.2, 10]")
for est in (direct, deriv, smooth):
    l1, sup = compare(est, exact_f, (0.2, 10))
    print(f"  {est.method:<10}  L1 {l1:.1e}   sup {sup:.1e}   atom {est.atom:.4f}")
print(f"\natom + continuous mass (direct) = {direct.atom + direct.total_mass:.4f}")
