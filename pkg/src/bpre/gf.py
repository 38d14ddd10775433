"""Quenched generating-function composition, extinction and classification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .env import EnvironmentPath, EnvironmentProcess, drift_estimate, gen_fn, horner, sample_path


@dataclass(frozen=True)
class CompositionResult:
    value: complex
    depth: int
    path_id: str


def compose_F(path: EnvironmentPath, s, depth: int):
    """``F_n(s) = f_0(f_1(...f_{n-1}(s)))`` along ``path``; ``s`` may be an array.

    The innermost map is ``f_{n-1}``; ``F_0`` is the identity.
    """
    if not 0 <= depth <= len(path):
        raise ValueError(f"depth {depth} outside [0, {len(path)}]")
    s = np.asarray(s)
    if np.any(np.abs(s) > 1 + 1e-12):
        raise ValueError("composition evaluated outside the unit disk")
    z = s.astype(np.result_type(s, float))
    for j in range(depth - 1, -1, -1):
        z = gen_fn(path[j], z)
    return z[()] if z.ndim == 0 else z


def composition(path: EnvironmentPath, s: complex, depth: int) -> CompositionResult:
    return CompositionResult(complex(compose_F(path, s, depth)), depth, path.path_id)


def pmf_Z(path: EnvironmentPath, n: int, z0: int = 1) -> np.ndarray:
    """Coefficients of ``F_n(s)^z0``, i.e. the law of ``Z_n`` given ``Z_0 = z0``."""
    poly = np.array([0.0, 1.0])
    for j in range(n - 1, -1, -1):
        c = path[j].coeffs
        acc = np.array([c[-1]])
        for a in c[-2::-1]:
            acc = P.polyadd(P.polymul(acc, poly), [a])
        poly = acc
    return P.polypow(poly, z0)


@dataclass(frozen=True)
class ExtinctionResult:
    q: float
    converged: bool
    depth: int
    iterates: np.ndarray

    def rows(self):
        inc = np.diff(self.iterates, prepend=np.nan)
        return [(n, float(qn), float(d)) for n, (qn, d) in enumerate(zip(self.iterates, inc))]


def _iterates_constant(coeffs, N):
    q = np.zeros(N + 1)
    for n in range(N):
        q[n + 1] = horner(coeffs, q[n])
    return q


def _iterates(path, N):
    # z[n] carries the chain for F_n(0); chain n enters at level n-1.
    z = np.zeros(N + 1)
    for j in range(N - 1, -1, -1):
        z[j + 1:] = horner(path[j].coeffs, z[j + 1:])
    return z


def extinction_prob(path_or_proc, tol: float = 1e-12, max_depth: int = 10_000, seed=0) -> ExtinctionResult:
    """Quenched extinction probability ``q = lim F_n(0)``.

    The iterates ``q_n = F_n(0)`` are nondecreasing, so every iterate is a
    lower bound. Iteration stops once the increments ``q_{k+1} - q_k`` stay
    below ``tol`` for every ``k`` in ``[n, 2n]``; a single small increment is
    not enough along a random path, where it can vanish early (for instance
    while ``xi_0(0) = 0``). For an :class:`EnvironmentProcess` the path is drawn
    from ``seed`` and extended as needed (longer draws extend shorter ones).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(path_or_proc, EnvironmentProcess):
        proc = path_or_proc
        cap = max_depth
        constant = len(set(proc.states)) == 1
        get_path = lambda N: sample_path(proc, N, seed)
    else:
        path = path_or_proc
        cap = min(max_depth, len(path))
        constant = len(set(path.dists)) == 1
        get_path = lambda N: path.prefix(N)

    N = min(64, cap)
    while True:
        p = get_path(N)
        q = _iterates_constant(p[0].coeffs, N) if constant else _iterates(p, N)
        big = np.flatnonzero(np.diff(q) >= tol)
        start = 0 if big.size == 0 else int(big[-1]) + 1
        if 2 * start <= N:
            return ExtinctionResult(float(q[N]), True, N, q)
        if N >= cap:
            return ExtinctionResult(float(q[N]), False, N, q)
        N = min(2 * N, cap)


@dataclass(frozen=True)
class Classification:
    mu: float
    supercritical: bool
    kesten_stigum_estimate: float
    nonextin_ok: bool
    degenerate_env: bool
    nondeg_prob: float
    nonextin_necessary: bool | None
    kesten_stigum_mc: float
    kesten_stigum_mc_stderr: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _ks_term(dist):
    if dist.mean == 0:
        return math.inf
    k = dist.support.astype(float)
    logk = np.log(np.maximum(k, 1.0))
    return float(np.dot(k * logk, dist.probs) / dist.mean)


def classify(proc: EnvironmentProcess, ks_samples: int = 10_000, seed=0) -> Classification:
    """Drift, supercriticality and the Kesten-Stigum functional ``E[Z_1 log+ Z_1 / m_0]``.

    The functional is summed exactly over the finite supports. A Monte Carlo
    estimate from ``ks_samples`` draws of ``(xi_0, Z_1)`` is reported alongside.
    """
    if ks_samples < 1:
        raise ValueError("ks_samples must be >= 1")
    d = drift_estimate(proc)
    pi = proc.stationary
    pos = pi > 0
    terms = np.array([_ks_term(s) for s in proc.states])
    ks = float(np.dot(pi[pos], terms[pos]))

    rng = np.random.default_rng(seed)
    idx = rng.choice(len(proc.states), size=ks_samples, p=pi)
    vals = np.zeros(ks_samples)
    for i, s in enumerate(proc.states):
        sel = idx == i
        if not sel.any():
            continue
        z = rng.choice(s.support, size=int(sel.sum()), p=s.probs).astype(float)
        vals[sel] = z * np.log(np.maximum(z, 1.0)) / s.mean if s.mean > 0 else math.inf
    mc = float(vals.mean())
    mc_se = float(vals.std(ddof=1) / math.sqrt(ks_samples)) if ks_samples > 1 else math.nan

    return Classification(
        mu=d.mu,
        supercritical=d.mu > 0,
        kesten_stigum_estimate=ks,
        nonextin_ok=d.nonextin_ok,
        degenerate_env=all(s.degenerate for s, p in zip(proc.states, pi) if p > 0),
        nondeg_prob=d.nondeg_prob,
        nonextin_necessary=True if proc.kind == "iid" else None,
        kesten_stigum_mc=mc,
        kesten_stigum_mc_stderr=mc_se,
    )
