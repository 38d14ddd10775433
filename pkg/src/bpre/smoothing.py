"""Particle iteration of smoothing/affine fixed-point equations and Bernoulli convolutions.

The smoothing transform maps the law of ``Y`` to the law of
``sum_j T_j Y_j + C`` with ``Y_j`` independent copies of ``Y``. Here
``(C, T_1, ..., T_k)`` has finite support and the current law is represented
by a particle sample. The affine case has exactly one nonzero weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class SmoothingSpec:
    """Finite-support joint law of ``(C, T_1, ..., T_k)``.

    ``outcomes[i] = (C, (T_1, ..., T_k))`` occurs with probability ``probs[i]``.
    """

    outcomes: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(self.outcomes),) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("probs must be a probability vector over the outcomes")
        object.__setattr__(self, "outcomes", tuple((float(c), tuple(map(float, ts))) for c, ts in self.outcomes))
        object.__setattr__(self, "probs", p)

    @property
    def counts(self) -> np.ndarray:
        """Number of nonzero weights ``N`` per outcome."""
        return np.array([sum(1 for x in ts if x != 0) for _, ts in self.outcomes])

    @property
    def expected_count(self) -> float:
        return float(np.dot(self.counts, self.probs))

    @property
    def kind(self) -> str:
        n = self.counts
        if np.all(n[self.probs > 0] == 1):
            return "affine"
        if self.expected_count > 1:
            return "smoothing"
        return "other"

    @property
    def mean_weight_sum(self) -> float:
        return float(sum(p * sum(ts) for p, (_, ts) in zip(self.probs, self.outcomes)))

    @property
    def mean_shift(self) -> float:
        return float(sum(p * c for p, (c, _) in zip(self.probs, self.outcomes)))

    @classmethod
    def affine(cls, T: float, C_values: Sequence[float], C_probs: Sequence[float] | None = None) -> "SmoothingSpec":
        k = len(C_values)
        p = np.full(k, 1 / k) if C_probs is None else np.asarray(C_probs, dtype=float)
        return cls(tuple((c, (T,)) for c in C_values), p)

    @classmethod
    def bernoulli(cls, lam: float) -> "SmoothingSpec":
        """``Y = lam Y + C`` with ``C = +-1`` equiprobable."""
        return cls.affine(lam, (-1.0, 1.0))


def smoothing_iterate(spec: SmoothingSpec, init_sample, iterations: int, rng, history: bool = False):
    """Apply the transform ``iterations`` times to a particle sample.

    Each new particle draws an outcome ``(C, T_1..T_k)`` and ``k`` parents from
    the current sample with replacement, then emits ``sum T_j Y_parent_j + C``.
    The sample size is preserved. With ``history`` the list of all samples is
    returned as well.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    y = np.asarray(init_sample, dtype=float).copy()
    if y.size == 0:
        raise ValueError("init_sample is empty")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    L = max(len(ts) for _, ts in spec.outcomes)
    Tm = np.zeros((len(spec.outcomes), L))
    for i, (_, ts) in enumerate(spec.outcomes):
        Tm[i, : len(ts)] = ts
    Cv = np.array([c for c, _ in spec.outcomes])
    R = y.size
    hist = [y.copy()] if history else None
    for _ in range(iterations):
        o = rng.choice(len(spec.outcomes), size=R, p=spec.probs)
        parents = rng.integers(0, R, size=(R, L))
        y = Cv[o] + np.einsum("ij,ij->i", Tm[o], y[parents])
        if history:
            hist.append(y.copy())
    return (y, hist) if history else y


def bernoulli_charfn(lam: float, t, K: int | None = None):
    """``prod_{k=0}^{K} cos(lam^k t)``, the characteristic function of ``sum_k +-lam^k``.

    ``K`` defaults to the smallest value with ``lam^K |t| < 1e-8``; an explicit
    ``K`` that is too small for some ``t`` raises.
    """
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    t = np.asarray(t, dtype=float)
    amax = float(np.abs(t).max(initial=0.0))
    need = 0 if amax == 0 else max(0, math.ceil(math.log(1e-8 / amax) / math.log(lam)))
    while amax > 0 and lam**need * amax >= 1e-8:
        need += 1
    if K is None:
        K = need
    elif K < need:
        raise ValueError(f"K={K} insufficient for |t|={amax:g}; need K >= {need}")
    out = np.ones_like(t)
    s = 1.0
    for _ in range(K + 1):
        out = out * np.cos(s * t)
        s *= lam
    return out[()] if out.ndim == 0 else out


class BernoulliMeasure:
    """Law of ``sum_{k<depth} eps_k lam^k`` with independent fair signs."""

    def __init__(self, lam: float, depth: int):
        if not 0 < lam < 1:
            raise ValueError("lambda must lie in (0, 1)")
        if depth < 0:
            raise ValueError("depth must be >= 0")
        self.lam = lam
        self.depth = depth
        loc = np.zeros(1)
        for _ in range(depth):
            loc = self.affine_step(loc)
        self.locations = np.sort(loc)
        self.weights = np.full(loc.size, 2.0**-depth)

    def affine_step(self, loc: np.ndarray) -> np.ndarray:
        """Image of an atom set under ``y -> lam y + C``."""
        return np.concatenate([self.lam * loc - 1, self.lam * loc + 1])

    def charfn(self, t):
        t = np.asarray(t, dtype=float)
        out = np.ones_like(t)
        for k in range(self.depth):
            out = out * np.cos(self.lam**k * t)
        return out

    def charfn_limit(self, t, K: int | None = None):
        return bernoulli_charfn(self.lam, t, K)


@dataclass(frozen=True)
class DecayReport:
    windows: list
    sups: np.ndarray
    argmax: np.ndarray
    trend: str

    def rows(self):
        return [(a, b, float(s), float(x)) for (a, b), s, x in zip(self.windows, self.sups, self.argmax)]


def decay_report(charfn: Callable, T_max: float, windows=None, points_per_unit: float = 20.0,
                 extra_points=None) -> DecayReport:
    """Supremum of ``|psi|`` on each window of ``[1, T_max]`` (default dyadic).

    The suprema are taken over a uniform mesh plus any ``extra_points``; they
    are evidence about decay, not a certificate. ``trend`` is ``"decaying"``
    when the window suprema are nonincreasing and the last is below a tenth of
    the first, ``"flat"`` otherwise.
    """
    if windows is None:
        windows = []
        a = 1.0
        while a < T_max:
            windows.append((a, min(2 * a, T_max)))
            a *= 2
    extra = np.empty(0) if extra_points is None else np.asarray(extra_points, dtype=float)
    sups, arg = [], []
    for a, b in windows:
        n = max(int(math.ceil((b - a) * points_per_unit)) + 1, 2)
        t = np.concatenate([np.linspace(a, b, n), extra[(extra >= a) & (extra <= b)]])
        v = np.abs(np.asarray(charfn(t)))
        i = int(np.argmax(v))
        sups.append(float(v[i]))
        arg.append(float(t[i]))
    sups = np.array(sups)
    trend = "decaying" if sups.size > 1 and np.all(np.diff(sups) <= 1e-12) and sups[-1] < 0.1 * sups[0] else "flat"
    return DecayReport(list(windows), sups, np.array(arg), trend)
