"""Quenched Monte Carlo for ``Z_n`` and the martingale ``W_n = Z_n / M_n``.

Replicas are processed in fixed-size blocks. Block ``b`` draws from its own
Philox stream keyed by ``(master_seed, b)``, so results depend only on
``(path, replicas, horizon, master_seed)`` and not on thread count or
scheduling order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .env import EnvironmentPath, OffspringDistribution, flat_seed

INT64_MAX = np.iinfo(np.int64).max
BLOCK = 8192


def _normalize(z, M):
    # W = 0 whenever Z = 0, also when M = 0 after a sterile generation
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(z == 0, 0.0, z / M)


def block_rng(master_seed, block: int) -> np.random.Generator:
    """Philox stream for one replica block, keyed by ``(master_seed, block)``."""
    ss = np.random.SeedSequence(flat_seed(master_seed), spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def offspring_sum(dist: OffspringDistribution, counts: np.ndarray, rng: np.random.Generator):
    """Total offspring of ``counts[i]`` independent parents, for every ``i``.

    Exact in law: point masses are scaled, two-atom laws use a binomial draw,
    anything else a multinomial over the support. Returns ``(totals, saturated)``
    where saturated entries are clamped to ``INT64_MAX``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    out = np.zeros_like(counts)
    live = counts > 0
    if not live.any():
        return out, np.zeros(counts.shape, dtype=bool)
    saturated = live & (counts.astype(float) * dist.max_offspring >= float(INT64_MAX))
    ok = live & ~saturated
    n = counts[ok]
    k = dist.support
    if k.size == 1:
        out[ok] = n * k[0]
    elif k.size == 2:
        out[ok] = n * k[0] + (k[1] - k[0]) * rng.binomial(n, dist.probs[1])
    else:
        out[ok] = rng.multinomial(n, dist.probs) @ k
    out[saturated] = INT64_MAX
    return out, saturated


@dataclass(frozen=True)
class Trajectory:
    z: np.ndarray
    w: np.ndarray
    extinct_at: int | None
    saturated: bool = False


def simulate_Z(path: EnvironmentPath, z0: int, horizon: int, rng: np.random.Generator) -> Trajectory:
    """One trajectory ``Z_0..Z_horizon`` with ``Z_0 = z0``."""
    if z0 < 1:
        raise ValueError("z0 must be >= 1")
    if horizon > len(path):
        raise ValueError("horizon exceeds path length")
    M = path.cum_means
    z = np.zeros(horizon + 1, dtype=np.int64)
    z[0] = z0
    extinct_at = None
    saturated = False
    for k in range(1, horizon + 1):
        tot, sat = offspring_sum(path[k - 1], z[k - 1:k], rng)
        z[k] = tot[0]
        if sat[0]:
            saturated = True
            z = z[: k + 1]
            break
        if z[k] == 0:
            extinct_at = k
            break
    w = _normalize(z, z0 * M[: z.size])
    if extinct_at is not None and z.size < horizon + 1:
        z = np.concatenate([z, np.zeros(horizon + 1 - z.size, dtype=np.int64)])
        w = np.concatenate([w, np.zeros(horizon + 1 - w.size)])
    return Trajectory(z, w, extinct_at, saturated)


@dataclass(frozen=True)
class WSample:
    """Terminal ``W_n`` over independent replicas plus per-generation moments.

    ``extinct_at[i]`` is the generation at which replica ``i`` died out, or
    ``-1``. ``gen_mean[k]`` and ``gen_m2[k]`` are the replica averages of
    ``W_k`` and ``W_k**2``.
    """

    values: np.ndarray
    extinct_at: np.ndarray
    horizon: int
    path_id: str
    gen_mean: np.ndarray
    gen_m2: np.ndarray
    saturated: np.ndarray

    @property
    def extinct_flags(self) -> np.ndarray:
        return self.extinct_at >= 0

    @property
    def replicas(self) -> int:
        return self.values.size

    def extinct_fraction(self, k: int | None = None) -> float:
        k = self.horizon if k is None else k
        return float(np.mean((self.extinct_at >= 0) & (self.extinct_at <= k)))

    def gen_stderr(self) -> np.ndarray:
        var = np.maximum(self.gen_m2 - self.gen_mean**2, 0.0)
        return np.sqrt(var / max(self.replicas - 1, 1))


def _run_block(path, horizon, master_seed, b, size):
    rng = block_rng(master_seed, b)
    M = path.cum_means
    z = np.ones(size, dtype=np.int64)
    extinct_at = np.full(size, -1, dtype=np.int64)
    saturated = np.zeros(size, dtype=bool)
    s1 = np.zeros(horizon + 1)
    s2 = np.zeros(horizon + 1)
    s1[0] = s2[0] = size
    for k in range(1, horizon + 1):
        live = np.flatnonzero(z)
        if live.size:
            tot, sat = offspring_sum(path[k - 1], z[live], rng)
            z[live] = tot
            saturated[live[sat]] = True
            extinct_at[live[tot == 0]] = k
        w = _normalize(z, M[k])
        s1[k] = w.sum()
        s2[k] = (w * w).sum()
    return _normalize(z, M[horizon]), extinct_at, saturated, s1, s2


def simulate_W(path: EnvironmentPath, replicas: int, horizon: int, master_seed, threads: int = 1,
               block: int = BLOCK) -> WSample:
    """``replicas`` independent copies of ``W_horizon`` started from ``Z_0 = 1``."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if horizon > len(path):
        raise ValueError("horizon exceeds path length")
    sizes = [min(block, replicas - lo) for lo in range(0, replicas, block)]
    job = lambda b: _run_block(path, horizon, master_seed, b, sizes[b])
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(job, range(len(sizes))))
    else:
        parts = [job(b) for b in range(len(sizes))]
    values = np.concatenate([p[0] for p in parts])
    extinct_at = np.concatenate([p[1] for p in parts])
    saturated = np.concatenate([p[2] for p in parts])
    # block partial sums are combined in block order
    s1 = np.sum([p[3] for p in parts], axis=0)
    s2 = np.sum([p[4] for p in parts], axis=0)
    return WSample(values, extinct_at, horizon, path.path_id, s1 / replicas, s2 / replicas, saturated)


@dataclass(frozen=True)
class MomentSummary:
    atom: float
    mean: float
    var: float
    stderr_atom: float
    stderr_mean: float
    stderr_var: float
    c: float
    N: int

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def concentration_index(values: np.ndarray, target: float) -> int:
    """Smallest ``n >= 1`` with ``E[(W - W')^2; |W - W'| <= n] >= target``.

    ``W, W'`` are taken as disjoint halves of the sample (independent replicas).
    """
    h = values.size // 2
    if h == 0 or target <= 0:
        return 1
    d = np.abs(values[:h] - values[h: 2 * h])
    order = np.sort(d)
    csum = np.cumsum(order**2) / h
    if csum[-1] < target:
        return int(math.ceil(order[-1])) + 1
    i = int(np.searchsorted(csum, target))
    return max(1, int(math.ceil(order[i])))


def atom_and_moments(sample: WSample) -> MomentSummary:
    """Atom, mean, variance with standard errors, and the plug-in ``c`` and ``N``.

    ``c = min(1, var) / 8``; ``N`` is the :func:`concentration_index` at level ``8c``.
    """
    v = sample.values
    R = v.size
    if R == 0:
        raise ValueError("empty sample")
    atom = float(np.mean(sample.extinct_at >= 0))
    mean = float(v.mean())
    dev = v - mean
    var = float(np.mean(dev**2) * R / max(R - 1, 1))
    m4 = float(np.mean(dev**4))
    c = min(1.0, var) / 8
    return MomentSummary(
        atom=atom,
        mean=mean,
        var=var,
        stderr_atom=math.sqrt(atom * (1 - atom) / R),
        stderr_mean=math.sqrt(var / R),
        stderr_var=math.sqrt(max(m4 - var**2, 0.0) / R),
        c=c,
        N=concentration_index(v, 8 * c),
    )
