"""Quenched characteristic function of the martingale limit and its bounds.

``psi(t, xi) = E_xi exp(i t W)`` is computed through the identity
``psi(t, xi) = F_n(psi(t / M_n, T^n xi))``: choose ``n`` so that
``|t| / M_n <= tail_eps``, replace the inner value by a short-argument
approximation (the "tail seed") and compose the generating functions down to
generation 0.

Tail seed. With ``u = t / M_n`` the seed is ``exp(i u g - u^2 V / 2)`` where
``g`` is the tail mean of ``W`` (1 by default) and ``V`` its variance in the
shifted environment, obtained by running the one-step variance identity
``V(xi) = V(T xi) / m_0 + g^2 sigma_0^2 / m_0^2`` backwards along the path.
The seed has modulus at most 1 and matches the first two moments. A seed
matching only the mean (``tail_var=0``) loses a full order: composing through
``F_n`` multiplies the seed error by roughly ``M_n |psi'(t)|``, so an
``O(u^2)`` seed error becomes ``O(tail_eps)`` in ``psi(t)``.

Rounding. The same amplification applies to rounding errors made near the
innermost levels, giving a floor of about ``2 M_n`` units in the last place.
With ``M_n ~ T / tail_eps = 1e7`` that is ``1e-9`` in double precision, so the
seed and the composition are carried in extended precision where the platform
provides it (``np.clongdouble``) and rounded to double at the end.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .env import EPS_PMF, EnvironmentPath, OffspringDistribution, horner
from .sim import WSample, atom_and_moments


class PathTooShortError(ValueError):
    """No composition depth within the path reaches the tail threshold."""


def tail_variances(path: EnvironmentPath, w_mean: float = 1.0) -> np.ndarray:
    """``V[j] ~ Var_{T^j xi} W`` for ``j = 0..len(path)``, truncated at the path end."""
    m = path.means
    s2 = path.variances
    V = np.zeros(len(path) + 1)
    for j in range(len(path) - 1, -1, -1):
        V[j] = V[j + 1] / m[j] + w_mean**2 * s2[j] / m[j] ** 2
    return V


def required_depth(path: EnvironmentPath, t, tail_eps: float) -> np.ndarray:
    """Smallest ``n`` with ``|t| / M_n <= tail_eps`` for each ``t``."""
    a = np.abs(np.asarray(t, dtype=float))
    cm = np.maximum.accumulate(path.cum_means)
    n = np.searchsorted(cm, a / tail_eps, side="left")
    if np.any(n > len(path)):
        worst = float(a.max())
        raise PathTooShortError(
            f"|t|={worst:g} needs M_n >= {worst / tail_eps:g} but the path only reaches {cm[-1]:g}; "
            "supply a longer path"
        )
    return n


COMPOSE_DTYPE = np.clongdouble


def _compose_levels(path, z, n):
    # points sorted by descending depth so the active set is always a prefix
    order = np.argsort(-n, kind="stable")
    zs = z[order].astype(COMPOSE_DTYPE)
    ns = n[order]
    neg = -ns
    for j in range(int(ns.max(initial=0)) - 1, -1, -1):
        k = int(np.searchsorted(neg, -j, side="left"))  # number of points with n > j
        zs[:k] = horner(path[j].coeffs.astype(COMPOSE_DTYPE().real.dtype), zs[:k])
    out = np.empty(zs.shape, dtype=complex)
    out[order] = zs
    return out


def _psi_nonneg(path, a, tail_eps, w_mean, V, depth):
    if depth is None:
        n = required_depth(path, a, tail_eps)
    else:
        if depth > len(path):
            raise PathTooShortError(f"depth {depth} exceeds path length {len(path)}")
        n = np.full(a.shape, depth, dtype=np.int64)
    real = COMPOSE_DTYPE().real.dtype
    u = a.astype(real) / path.cum_means[n].astype(real)
    var = (V[n] if isinstance(V, np.ndarray) else np.full(a.shape, V)).astype(real)
    z = np.exp(u * (1j * real.type(w_mean)) - real.type(0.5) * u * u * var)
    psi = _compose_levels(path, z, n)
    psi[a == 0] = 1.0
    return psi, n


def quenched_psi(path: EnvironmentPath, t, tail_eps: float = 1e-4, w_mean_tail: float = 1.0,
                 tail_var="auto", depth: int | None = None, return_depth: bool = False):
    """``psi(t, xi)`` for scalar or array ``t``.

    ``tail_var='auto'`` uses the variance-matched tail seed; a number fixes
    ``V`` (``0`` gives the mean-only seed ``exp(i u g)``). ``depth`` forces a
    common composition depth instead of the per-point minimum.
    """
    if tail_eps <= 0:
        raise ValueError("tail_eps must be positive")
    t = np.asarray(t, dtype=float)
    V = tail_variances(path, w_mean_tail) if tail_var == "auto" else float(tail_var)
    a = np.abs(t).ravel()
    psi, n = _psi_nonneg(path, a, tail_eps, w_mean_tail, V, depth)
    psi = np.where(t.ravel() < 0, np.conj(psi), psi).reshape(t.shape)
    n = n.reshape(t.shape)
    if t.ndim == 0:
        psi, n = complex(psi), int(n)
    return (psi, n) if return_depth else psi


@dataclass(frozen=True)
class CharFnGrid:
    """``psi`` sampled on the symmetric grid ``t_k = k dt``, ``|k| <= K``."""

    t: np.ndarray
    psi: np.ndarray
    depth_used: np.ndarray
    dt: float
    tail_eps: float = float("nan")
    settings: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @classmethod
    def from_function(cls, fn, T: float, dt: float) -> "CharFnGrid":
        """Grid for a characteristic function known in closed form."""
        K = int(round(T / dt))
        tp = dt * np.arange(K + 1)
        vals = np.asarray(fn(tp), dtype=complex)
        vals[0] = 1.0
        return cls(*_mirror(tp, vals, np.zeros(K + 1, dtype=np.int64)), dt=dt)

    def derivative(self) -> np.ndarray:
        """``psi'`` by centered differences with one Richardson step."""
        p, h = self.psi, self.dt
        d = np.gradient(p, h, edge_order=2)
        if p.size >= 5:
            d1 = (p[3:-1] - p[1:-3]) / (2 * h)
            d2 = (p[4:] - p[:-4]) / (4 * h)
            d[2:-2] = (4 * d1 - d2) / 3
        return d

    def rows(self):
        return zip(self.t, self.psi.real, self.psi.imag, np.abs(self.psi), self.depth_used)


def _mirror(tp, vals, depth):
    t = np.concatenate([-tp[:0:-1], tp])
    psi = np.concatenate([np.conj(vals[:0:-1]), vals])
    d = np.concatenate([depth[:0:-1], depth])
    return t, psi, d


def build_grid(path: EnvironmentPath, T: float, dt: float, tail_eps: float = 1e-4,
               w_mean_tail: float = 1.0, tail_var="auto", uniform_depth: bool = True,
               threads: int = 1, chunk: int = 4096) -> CharFnGrid:
    """Evaluate ``psi`` on ``[0, T]`` with step ``dt`` and mirror by conjugation.

    With ``uniform_depth`` every point uses the depth required by ``T``; the
    seed error is then smooth in ``t`` and finite differences of the grid do
    not pick up jumps where the per-point depth would change.
    """
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    K = int(round(T / dt))
    tp = dt * np.arange(K + 1)
    depth = int(required_depth(path, [tp[-1]], tail_eps)[0]) if uniform_depth else None
    V = tail_variances(path, w_mean_tail) if tail_var == "auto" else float(tail_var)
    pieces = [tp[i:i + chunk] for i in range(0, tp.size, chunk)]
    job = lambda a: _psi_nonneg(path, a, tail_eps, w_mean_tail, V, depth)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(job, pieces))
    else:
        res = [job(a) for a in pieces]
    vals = np.concatenate([r[0] for r in res])
    dep = np.concatenate([r[1] for r in res])
    settings = {"T": T, "dt": dt, "tail_eps": tail_eps, "w_mean_tail": w_mean_tail,
                "tail_var": tail_var, "uniform_depth": uniform_depth}
    return CharFnGrid(*_mirror(tp, vals, dep), dt=dt, tail_eps=tail_eps, settings=settings)


@dataclass(frozen=True)
class HBoundCheck:
    violations: int
    margin: float
    max_h: float
    r: np.ndarray
    h: np.ndarray
    bound: np.ndarray


def h_function(dist: OffspringDistribution, r) -> np.ndarray:
    """``h(r) = (1 - r) f'(r) / (1 - f(r))``.

    Evaluated as ``f'(r) / sum_j P(Z > j) r^j``, which equals the quotient and
    avoids the cancellation in ``1 - f(r)`` near ``r = 1``.
    """
    c = dist.coeffs
    tail = np.cumsum(c[::-1])[::-1][1:]  # P(Z > j), j = 0..K-1
    if tail.size == 0 or tail[0] <= 0:
        raise ValueError("h is undefined for the point mass at 0")
    fprime = horner(c[1:] * np.arange(1, c.size), r) if c.size > 1 else np.zeros_like(r)
    return fprime / horner(tail, r)


def h_bound(dist: OffspringDistribution, r) -> np.ndarray:
    """``1 / (1 + f'(1)^{-1} sum_{k>=2} p_k (1 - r)^{k-1})``."""
    c = dist.coeffs
    if c.size <= 2:
        return np.ones_like(np.asarray(r, dtype=float))
    s = horner(c[2:], 1 - np.asarray(r, dtype=float)) * (1 - np.asarray(r, dtype=float))
    return 1 / (1 + s / dist.mean)


def h_bound_check(dist: OffspringDistribution, r_grid, tol: float = 1e-12) -> HBoundCheck:
    """Compare ``h`` with its upper bound (and with 1) on ``r_grid``.

    Points above ``1 - 1e-6`` are skipped.
    """
    if dist.pmf(0) >= 1 - EPS_PMF:
        raise ValueError("requires xi(0) < 1")
    r = np.asarray(r_grid, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    r = r[r <= 1 - 1e-6]
    h = h_function(dist, r)
    b = h_bound(dist, r)
    excess = np.maximum(h - b, h - 1)
    return HBoundCheck(int(np.sum(excess > tol)), float(np.max(h - b)), float(np.max(h)), r, h, b)


def b_value(dist: OffspringDistribution, rho: float) -> float:
    """``1 / (1 + m^{-1} sum_{k>=2} p_k (1 - rho)^{k-1})`` for one generation."""
    return float(h_bound(dist, np.array([rho]))[0])


@dataclass(frozen=True)
class BoundReport:
    rho_hat: float
    c: float
    N: int
    quad_ok: bool
    quad_vacuous: bool
    quad_min_slack: float
    h_violations: int
    h_margin: float
    b_values: list
    b_rho: list
    psi_prime_tail: list
    psi_prime_total: float
    T: float
    dt: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def grid_rho(grid: CharFnGrid, lo: float = 1.0) -> float:
    """Grid supremum of ``|psi|`` over ``lo <= |t| <= T``."""
    sel = np.abs(grid.t) >= lo
    if not sel.any():
        raise ValueError("grid does not reach |t| >= 1")
    return float(np.abs(grid.psi[sel]).max())


def dyadic_windows(T: float, lo: float = 1.0):
    out = []
    b = T
    while b / 2 >= lo:
        out.append((b / 2, b))
        b /= 2
    return out


def window_integrals(grid: CharFnGrid, windows) -> list:
    """Trapezoid ``int_a^b |psi'|`` over each ``(a, b)`` on the positive axis."""
    dp = np.abs(grid.derivative())
    pos = grid.t >= 0
    tp, dpp = grid.t[pos], dp[pos]
    cum = cumulative_trapezoid(dpp, tp, initial=0.0)
    return [float(np.interp(b, tp, cum) - np.interp(a, tp, cum)) for a, b in windows]


def bound_suite(grid: CharFnGrid, path: EnvironmentPath, sample: WSample, b_count: int = 4,
                r_points: int = 200, quad_points: int = 64, tol: float = 1e-9) -> BoundReport:
    """Numerical checks of the bounds on ``psi`` along ``path``.

    ``rho_hat`` is a grid supremum, not a certified one. ``b_values`` use the
    grid supremum for the shifted environment in place of the true ``rho``
    and are estimates.
    """
    if grid.dt > 0.5:
        raise ValueError("grid too coarse for finite differences (dt > 0.5)")
    if grid.T < 1:
        raise ValueError("grid must cover [-T, T] with T >= 1")
    rho = grid_rho(grid)
    mom = atom_and_moments(sample)
    c, N = mom.c, mom.N

    settings = {k: grid.settings[k] for k in ("tail_eps", "w_mean_tail", "tail_var")} if grid.settings else {}
    t_max = 1 / (2 * N)
    sel = (grid.t > 0) & (grid.t <= t_max)
    tq_extra = np.linspace(t_max / quad_points, t_max, quad_points)
    if settings:
        extra = np.abs(quenched_psi(path, tq_extra, **settings))
    else:
        extra = np.empty(0)
        tq_extra = np.empty(0)
    tq = np.concatenate([grid.t[sel], tq_extra])
    mod = np.concatenate([np.abs(grid.psi[sel]), extra])
    slack = 1 - c * tq**2 - mod
    vacuous = c == 0
    min_slack = float(slack.min()) if slack.size else float("inf")
    quad_ok = vacuous or min_slack >= -tol

    r = np.linspace(0, 1 - 1e-6, r_points)
    viol = 0
    margin = -np.inf
    for d in set(path.dists):
        if d.pmf(0) >= 1 - EPS_PMF:
            continue
        hc = h_bound_check(d, r)
        viol += hc.violations
        margin = max(margin, hc.margin)

    b_vals, b_rho = [], []
    constant = len(set(path.dists)) == 1
    for j in range(min(b_count, len(path) - 1)):
        if constant:
            rj = rho
        else:
            gj = build_grid(path.shift(j + 1), grid.T, grid.dt, **settings) if settings else grid
            rj = grid_rho(gj)
        b_rho.append(rj)
        b_vals.append(b_value(path[j], rj))

    windows = dyadic_windows(grid.T)
    ints = window_integrals(grid, windows)
    tail = [{"a": a, "b": b, "integral": v} for (a, b), v in zip(windows, ints)]
    dp = np.abs(grid.derivative())
    total = float(trapezoid(dp, grid.t))

    return BoundReport(rho, c, N, bool(quad_ok), bool(vacuous), min_slack, viol, float(margin),
                       b_vals, b_rho, tail, total, grid.T, grid.dt)
