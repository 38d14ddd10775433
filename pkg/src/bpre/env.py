"""Offspring distributions, generating functions and environment generators.

An environment is a sequence of offspring laws ``xi_0, xi_1, ...``. This module
houses the single laws (:class:`OffspringDistribution`), stationary generators
over a finite set of laws (:class:`EnvironmentProcess`) and finite realizations
(:class:`EnvironmentPath`).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

EPS_PMF = 1e-12
MAX_SUPPORT = 100_000
# Path chunks are generated from independent sub-seeds so that a longer path
# always extends a shorter one drawn with the same seed.
PATH_CHUNK = 4096


class OffspringDistribution:
    """A probability mass function on the nonnegative integers.

    Zero-probability entries are dropped; ``support`` is strictly increasing.
    Instances are immutable and hashable by value.
    """

    __slots__ = ("_support", "_probs", "family", "__dict__")

    def __init__(self, support: Sequence[int], probs: Sequence[float], family: str = "explicit"):
        support = np.asarray(support, dtype=np.int64)
        probs = np.asarray(probs, dtype=float)
        if support.ndim != 1 or support.shape != probs.shape:
            raise ValueError("support and probs must be 1-d arrays of equal length")
        if support.size == 0:
            raise ValueError("empty support")
        if np.any(probs < 0) or np.any(probs > 1 + EPS_PMF):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(support < 0):
            raise ValueError("support must be nonnegative")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support keys must be strictly increasing")
        keep = probs > 0
        support, probs = support[keep], probs[keep]
        if support.size == 0:
            raise ValueError("empty support")
        total = probs.sum()
        if not (1 - EPS_PMF <= total <= 1 + EPS_PMF):
            raise ValueError(f"probabilities sum to {total!r}, outside [1-eps, 1]")
        probs = probs / total
        support.setflags(write=False)
        probs.setflags(write=False)
        self._support = support
        self._probs = probs
        self.family = family

    @property
    def support(self) -> np.ndarray:
        return self._support

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @cached_property
    def coeffs(self) -> np.ndarray:
        """Dense coefficients ``p_0..p_K`` of the generating function."""
        c = np.zeros(int(self._support[-1]) + 1)
        c[self._support] = self._probs
        c.setflags(write=False)
        return c

    @cached_property
    def mean(self) -> float:
        return float(np.dot(self._support, self._probs))

    @cached_property
    def factorial2(self) -> float:
        """Second factorial moment E[Z(Z-1)]."""
        k = self._support.astype(float)
        return float(np.dot(k * (k - 1), self._probs))

    @cached_property
    def variance(self) -> float:
        return max(self.factorial2 + self.mean - self.mean**2, 0.0)

    @property
    def max_offspring(self) -> int:
        return int(self._support[-1])

    @property
    def degenerate(self) -> bool:
        return bool(np.any(self._probs > 1 - EPS_PMF))

    def pmf(self, k: int) -> float:
        i = np.searchsorted(self._support, k)
        if i < self._support.size and self._support[i] == k:
            return float(self._probs[i])
        return 0.0

    def as_dict(self) -> dict[str, Any]:
        return {
            "family": "explicit",
            "pmf": {str(int(k)): float(p) for k, p in zip(self._support, self._probs)},
        }

    def _key(self):
        return (self._support.tobytes(), self._probs.tobytes())

    def __eq__(self, other):
        if not isinstance(other, OffspringDistribution):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        body = ", ".join(f"{int(k)}: {p:.6g}" for k, p in zip(self._support[:6], self._probs[:6]))
        more = ", ..." if self._support.size > 6 else ""
        return f"OffspringDistribution({self.family}, {{{body}{more}}}, mean={self.mean:.6g})"


def _truncate(pmf_fn, tail_fn, family: str, max_support: int) -> OffspringDistribution:
    K = 0
    while tail_fn(K) > EPS_PMF:
        K += 1
        if K > max_support:
            raise ValueError(f"{family}: tail mass not below {EPS_PMF} within {max_support} atoms")
    k = np.arange(K + 1)
    p = pmf_fn(k)
    return OffspringDistribution(k, p / p.sum(), family=family)


def explicit(pmf: Mapping[Any, float]) -> OffspringDistribution:
    items = sorted((int(k), float(v)) for k, v in pmf.items())
    if not items:
        raise ValueError("empty support")
    ks, ps = zip(*items)
    if any(p < 0 for p in ps):
        raise ValueError("negative probability")
    return OffspringDistribution(ks, ps, family="explicit")


def binary(p0: float, k: int) -> OffspringDistribution:
    """Zero children with probability ``p0``, otherwise ``k`` children."""
    if not 0 <= p0 <= 1:
        raise ValueError("p0 must lie in [0, 1]")
    if k < 1:
        raise ValueError("k must be >= 1")
    return OffspringDistribution([0, k], [p0, 1 - p0], family="binary")


def geometric(p: float, max_support: int = MAX_SUPPORT) -> OffspringDistribution:
    """P(Z = k) = (1 - p) p^k, truncated where the tail p^(K+1) drops below EPS_PMF."""
    if not 0 < p < 1:
        raise ValueError("geometric parameter must lie in (0, 1)")
    return _truncate(lambda k: (1 - p) * p**k, lambda K: p ** (K + 1), "geometric", max_support)


def poisson(lam: float, max_support: int = MAX_SUPPORT) -> OffspringDistribution:
    if lam <= 0:
        raise ValueError("poisson rate must be positive")
    return _truncate(
        lambda k: stats.poisson.pmf(k, lam), lambda K: stats.poisson.sf(K, lam), "poisson", max_support
    )


def make_offspring(spec: Mapping[str, Any] | OffspringDistribution, max_support: int = MAX_SUPPORT) -> OffspringDistribution:
    """Build an offspring law from a family descriptor.

    Accepted forms::

        {"family": "explicit", "pmf": {"0": 0.25, "2": 0.75}}
        {"family": "binary", "p0": 0.3, "k": 2}
        {"family": "geometric", "p": 0.6}
        {"family": "poisson", "lam": 1.5}

    A bare mapping ``{0: 0.25, 2: 0.75}`` is read as an explicit pmf.
    """
    if isinstance(spec, OffspringDistribution):
        return spec
    if "family" not in spec:
        return explicit(spec)
    family = spec["family"]
    if family == "explicit":
        return explicit(spec["pmf"])
    if family == "binary":
        return binary(float(spec["p0"]), int(spec["k"]))
    if family == "geometric":
        return geometric(float(spec["p"]), max_support)
    if family == "poisson":
        return poisson(float(spec.get("lam", spec.get("lambda"))), max_support)
    raise ValueError(f"unknown offspring family {family!r}")


def horner(coeffs: np.ndarray, s):
    """Evaluate ``sum_k coeffs[k] s^k`` for scalar or array ``s``."""
    acc = np.full(np.shape(s), coeffs[-1], dtype=np.result_type(s, float))
    for a in coeffs[-2::-1]:
        acc = acc * s + a
    return acc


def _derivative_coeffs(coeffs: np.ndarray, order: int) -> np.ndarray:
    c = coeffs
    for _ in range(order):
        c = c[1:] * np.arange(1, c.size) if c.size > 1 else np.zeros(1)
    return c


def gen_fn(dist: OffspringDistribution, s, order: int = 0):
    """Generating function ``f(s)`` or its first/second derivative.

    ``s`` may be a complex scalar or array inside the closed unit disk.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    s_arr = np.asarray(s)
    if np.any(np.abs(s_arr) > 1 + 1e-12):
        raise ValueError("generating function evaluated outside the unit disk")
    c = dist.coeffs if order == 0 else _derivative_coeffs(dist.coeffs, order)
    out = horner(c, s_arr)
    if s_arr.ndim == 0:
        return out[()]
    return out


class EnvironmentPath:
    """A finite realization ``xi_0, ..., xi_{n-1}`` of the environment."""

    def __init__(self, dists: Sequence[OffspringDistribution], state_ids: Sequence[int] | None = None):
        if len(dists) == 0:
            raise ValueError("empty environment path")
        self.dists = tuple(dists)
        self.state_ids = None if state_ids is None else np.asarray(state_ids, dtype=np.int64)

    def __len__(self):
        return len(self.dists)

    def __getitem__(self, j):
        return self.dists[j]

    @cached_property
    def means(self) -> np.ndarray:
        return np.array([d.mean for d in self.dists])

    @cached_property
    def variances(self) -> np.ndarray:
        return np.array([d.variance for d in self.dists])

    @cached_property
    def cum_means(self) -> np.ndarray:
        """``M_0 = 1, M_k = m_0 ... m_{k-1}`` for ``k = 0..n``."""
        with np.errstate(over="ignore"):
            return np.concatenate(([1.0], np.cumprod(self.means)))

    def shift(self, j: int) -> "EnvironmentPath":
        """The shifted environment ``T^j xi`` (drops the first ``j`` coordinates)."""
        if not 0 <= j < len(self):
            raise ValueError("shift out of range")
        ids = None if self.state_ids is None else self.state_ids[j:]
        return EnvironmentPath(self.dists[j:], ids)

    def prefix(self, n: int) -> "EnvironmentPath":
        ids = None if self.state_ids is None else self.state_ids[:n]
        return EnvironmentPath(self.dists[:n], ids)

    @cached_property
    def path_id(self) -> str:
        h = hashlib.sha1()
        for d in self.dists:
            h.update(d.support.tobytes())
            h.update(d.probs.tobytes())
            h.update(b"|")
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, EnvironmentPath):
            return NotImplemented
        return self.dists == other.dists

    def __hash__(self):
        return hash(self.dists)

    def __repr__(self):
        return f"EnvironmentPath(len={len(self)}, id={self.path_id})"

    @classmethod
    def constant(cls, dist: OffspringDistribution, n: int) -> "EnvironmentPath":
        return cls([dist] * n, np.zeros(n, dtype=np.int64))


def _reachable(adj: np.ndarray, start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if int(j) not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return seen


def stationary_law(P: np.ndarray) -> np.ndarray:
    """Left Perron vector of a row-stochastic matrix (unique if irreducible)."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class EnvironmentProcess:
    """Stationary generator of environments over a finite set of offspring laws.

    ``kind='iid'`` draws each ``xi_n`` independently from ``weights``;
    ``kind='markov'`` runs a stationary Markov chain with transition matrix
    ``transition`` started from ``initial``. Irreducibility is required unless
    ``require_ergodic=False``.
    """

    kind: str
    states: tuple[OffspringDistribution, ...]
    weights: np.ndarray | None = None
    transition: np.ndarray | None = None
    initial: np.ndarray | None = None
    require_ergodic: bool = field(default=True, repr=False)

    def __post_init__(self):
        states = tuple(make_offspring(s) for s in self.states)
        object.__setattr__(self, "states", states)
        n = len(states)
        if n == 0:
            raise ValueError("environment needs at least one state")
        if self.kind == "iid":
            w = np.ones(n) / n if self.weights is None else np.asarray(self.weights, dtype=float)
            if w.shape != (n,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise ValueError("iid weights must be a probability vector over the states")
            object.__setattr__(self, "weights", w)
        elif self.kind == "markov":
            if self.transition is None:
                raise ValueError("markov environment needs a transition matrix")
            P = np.asarray(self.transition, dtype=float)
            if P.shape != (n, n) or np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1) > 1e-12):
                raise ValueError("transition must be a row-stochastic matrix over the states")
            object.__setattr__(self, "transition", P)
            if self.require_ergodic and not self.irreducible:
                raise ValueError("transition matrix is not irreducible")
            pi = stationary_law(P) if self.initial is None else np.asarray(self.initial, dtype=float)
            if pi.shape != (n,) or np.any(pi < 0) or abs(pi.sum() - 1) > 1e-12:
                raise ValueError("initial law must be a probability vector over the states")
            if np.max(np.abs(pi @ P - pi)) > 1e-10:
                raise ValueError("initial law is not stationary for the transition matrix")
            object.__setattr__(self, "initial", pi)
        else:
            raise ValueError(f"unknown environment kind {self.kind!r}")

    @property
    def irreducible(self) -> bool:
        if self.kind == "iid":
            return True
        adj = self.transition > 0
        n = adj.shape[0]
        return all(len(_reachable(adj, i)) == n for i in range(n))

    @property
    def stationary(self) -> np.ndarray:
        return self.weights if self.kind == "iid" else self.initial

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "states": [s.as_dict() for s in self.states]}
        if self.kind == "iid":
            out["weights"] = self.weights.tolist()
        else:
            out["transition"] = self.transition.tolist()
            out["initial"] = self.initial.tolist()
        return out

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "EnvironmentProcess":
        kind = obj.get("kind", "iid")
        states = tuple(make_offspring(s) for s in obj["states"])
        if kind == "iid":
            return cls("iid", states, weights=obj.get("weights"))
        return cls("markov", states, transition=obj.get("transition"), initial=obj.get("initial"),
                   require_ergodic=obj.get("require_ergodic", True))

    @classmethod
    def constant(cls, dist: OffspringDistribution) -> "EnvironmentProcess":
        return cls("iid", (dist,), weights=[1.0])


def flat_seed(seed) -> list[int]:
    """Flatten nested seed tuples such as ``[[s, 1], 2]`` into a list of ints."""
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [x for part in seed for x in flat_seed(part)]


def _chunk_rng(seed, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(flat_seed(seed), spawn_key=(chunk,)))


def sample_path(proc: EnvironmentProcess, n: int, seed) -> EnvironmentPath:
    """Draw ``xi_0..xi_{n-1}``.

    Deterministic in ``(proc, n, seed)``; a path of length ``n`` is a prefix
    of any longer path drawn with the same seed.
    """
    if n < 1:
        raise ValueError("path length must be >= 1")
    k = len(proc.states)
    ids = np.empty(n, dtype=np.int64)
    state = None
    for c, lo in enumerate(range(0, n, PATH_CHUNK)):
        hi = min(lo + PATH_CHUNK, n)
        rng = _chunk_rng(seed, c)
        if proc.kind == "iid":
            ids[lo:hi] = rng.choice(k, size=hi - lo, p=proc.weights)
            continue
        # chunks are always generated in full so the draws do not depend on n
        u = rng.random(PATH_CHUNK)
        cum = np.cumsum(proc.transition, axis=1)
        j0 = lo
        if state is None:
            state = int(min(np.searchsorted(np.cumsum(proc.initial), u[0], side="right"), k - 1))
            ids[0] = state
            j0 = 1
        for j in range(j0, hi):
            state = int(min(np.searchsorted(cum[state], u[j - lo], side="right"), k - 1))
            ids[j] = state
    return EnvironmentPath([proc.states[i] for i in ids], ids)


class Drift(NamedTuple):
    mu: float
    nonextin_ok: bool
    nondeg_prob: float
    subcritical_degenerate: bool


def drift_estimate(proc: EnvironmentProcess) -> Drift:
    """Exact drift ``mu = E log m_0`` and the non-extinction checks under the stationary law."""
    pi = proc.stationary
    pos = pi > 0
    means = np.array([s.mean for s in proc.states])
    if np.any(pos & (means == 0)):
        mu = -math.inf
        dead = True
    else:
        mu = float(np.dot(pi[pos], np.log(means[pos])))
        dead = False
    f0 = np.array([s.pmf(0) for s in proc.states])
    nonextin_ok = not bool(np.any(pos & (f0 >= 1 - EPS_PMF)))
    nondeg = np.array([s.pmf(0) + s.pmf(1) < 1 - EPS_PMF for s in proc.states])
    return Drift(mu, nonextin_ok, float(pi[nondeg].sum()), dead)


def drift_from_path(path: EnvironmentPath) -> float:
    """Ergodic-average estimate of ``mu`` along a sampled path."""
    with np.errstate(divide="ignore"):
        return float(np.mean(np.log(path.means)))
