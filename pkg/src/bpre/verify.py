"""Numerical checks of the quantitative statements about ``W`` and ``psi``.

Each check returns a :class:`Check` row ``(name, status, margin, tolerance)``
where ``status`` is ``"pass"``, ``"fail"`` or ``"vacuous"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charfn import build_grid, bound_suite, h_bound_check
from .env import EnvironmentPath, OffspringDistribution
from .gf import compose_F, extinction_prob
from .sim import WSample, atom_and_moments, block_rng, offspring_sum, simulate_W


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    margin: float
    tolerance: float
    detail: dict | None = None

    @property
    def ok(self) -> bool:
        return self.status != "fail"

    def row(self):
        return (self.name, self.status, self.margin, self.tolerance)


def random_offspring(rng: np.random.Generator, max_k: int = 8) -> OffspringDistribution:
    """Random law on ``{0..K}``, ``K <= max_k``, with ``p_0 < 1``."""
    K = int(rng.integers(1, max_k + 1))
    p = rng.dirichlet(np.ones(K + 1))
    # sparsify some draws to reach boundary cases such as point masses
    if rng.random() < 0.3:
        p = p * (rng.random(K + 1) < 0.5)
        if p[1:].sum() == 0:
            p[K] = 1.0
        p = p / p.sum()
    return OffspringDistribution(np.arange(K + 1), p, family="random")


def h_bound_random(n: int = 1000, seed=0, max_k: int = 8, r_points: int = 200, tol: float = 1e-12) -> Check:
    rng = np.random.default_rng(seed)
    r = np.linspace(0, 1 - 1e-6, r_points)
    viol = 0
    worst = -math.inf
    for _ in range(n):
        hc = h_bound_check(random_offspring(rng, max_k), r, tol)
        viol += hc.violations
        worst = max(worst, hc.margin)
    return Check("h_bound_random", "pass" if viol == 0 else "fail", worst, tol, {"violations": viol, "dists": n})


def h_bound_states(states, r_points: int = 200, tol: float = 1e-12) -> Check:
    r = np.linspace(0, 1 - 1e-6, r_points)
    viol, worst = 0, -math.inf
    for d in states:
        if d.pmf(0) >= 1:
            continue
        hc = h_bound_check(d, r, tol)
        viol += hc.violations
        worst = max(worst, hc.margin)
    return Check("h_bound_env", "pass" if viol == 0 else "fail", worst, tol, {"violations": viol})


def martingale_mean_check(sample: WSample, k: float = 3.0) -> Check:
    mom = atom_and_moments(sample)
    dev = abs(mom.mean - 1)
    tol = k * mom.stderr_mean if mom.stderr_mean > 0 else 1e-12
    return Check("martingale_mean", "pass" if dev <= tol else "fail", dev, tol, {"mean": mom.mean})


def atom_vs_q_check(sample: WSample, path: EnvironmentPath, k: float = 3.0, q_tol: float = 1e-12) -> Check:
    """Extinct fraction at the horizon against the extinction probability of the path.

    The extinct fraction is unbiased for ``q_n = F_n(0)``; ``q - q_n`` is
    added to the tolerance as the horizon bias.
    """
    mom = atom_and_moments(sample)
    ext = extinction_prob(path, tol=q_tol)
    q_n = float(compose_F(path, 0.0, sample.horizon).real)
    dev = abs(mom.atom - ext.q)
    tol = k * mom.stderr_atom + (ext.q - q_n) + q_tol
    return Check("atom_vs_q", "pass" if dev <= tol else "fail", dev, tol,
                 {"atom": mom.atom, "q": ext.q, "q_horizon": q_n, "converged": ext.converged})


def variance_recursion_check(path: EnvironmentPath, replicas: int, horizon: int, seed, threads: int = 1,
                             k: float = 4.0, w_mean: float = 1.0) -> Check:
    """Residual of ``Var_xi W = Var_{T xi} W / m_0 + g^2 Var_xi Z_1 / m_0^2``.

    ``W`` is proxied by ``W_n`` on ``xi`` and ``W_{n-1}`` on ``T xi``, for
    which the identity holds exactly, so the residual is pure Monte Carlo noise.
    All three variances are estimated from independent simulations.
    """
    m0 = path.means[0]
    s0 = simulate_W(path, replicas, horizon, [seed, 0], threads)
    s1 = simulate_W(path.shift(1), replicas, horizon - 1, [seed, 1], threads)
    a0, a1 = atom_and_moments(s0), atom_and_moments(s1)
    z1, _ = offspring_sum(path[0], np.ones(replicas, dtype=np.int64), block_rng([seed, 2], 0))
    z1 = z1.astype(float)
    vz = float(z1.var(ddof=1)) if replicas > 1 else 0.0
    dz = z1 - z1.mean()
    se_z = math.sqrt(max(float(np.mean(dz**4)) - vz**2, 0.0) / replicas)
    resid = a0.var - a1.var / m0 - w_mean**2 * vz / m0**2
    se = math.sqrt(a0.stderr_var**2 + (a1.stderr_var / m0) ** 2 + (w_mean**2 * se_z / m0**2) ** 2)
    tol = k * se if se > 0 else 1e-12
    return Check("variance_recursion", "pass" if abs(resid) <= tol else "fail", abs(resid), tol,
                 {"var_xi": a0.var, "var_shift": a1.var, "var_z1": vz, "var_z1_exact": path[0].variance,
                  "m0": m0, "combined_stderr": se})


def quadratic_bound_check(path: EnvironmentPath, sample: WSample, T: float = 4.0, dt: float = 0.01,
                          tail_eps: float = 1e-4, tol: float = 1e-9) -> Check:
    grid = build_grid(path, T, dt, tail_eps)
    rep = bound_suite(grid, path, sample, b_count=0)
    status = "vacuous" if rep.quad_vacuous else ("pass" if rep.quad_ok else "fail")
    return Check("quadratic_bound", status, rep.quad_min_slack, -tol, {"c": rep.c, "N": rep.N})


def verify_suite(path: EnvironmentPath, replicas: int = 20_000, horizon: int = 30, seed=0, threads: int = 1,
                 n_random: int = 1000) -> list[Check]:
    """All checks on one sampled environment path."""
    sample = simulate_W(path, replicas, horizon, [seed, 10], threads)
    checks = [
        h_bound_states(set(path.dists)),
        h_bound_random(n_random, seed=[seed, 11]),
        quadratic_bound_check(path, sample),
        variance_recursion_check(path, replicas, horizon, [seed, 12], threads),
        martingale_mean_check(sample),
        atom_vs_q_check(sample, path),
    ]
    return checks
