"""Recovery of the absolutely continuous part of the law of ``W``.

Fourier convention: ``f(x) = (1/2pi) int psi(t) exp(-i t x) dt`` with
``psi(t) = E exp(i t W)``. Two inversion routes are provided, plus a kernel
density estimate from Monte Carlo samples:

* direct: invert ``psi - atom``; the constant removes the point mass at 0.
* derivative: invert ``psi'`` to get ``g(x) = i x f(x)`` and divide by ``i x``.
  The atom contributes a constant to ``psi`` and drops out, but the formula is
  singular at 0, so ``|x| < x_min`` is excluded.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import fftconvolve

from .charfn import CharFnGrid
from .sim import WSample

CHUNK = 512


@dataclass(frozen=True)
class DensityEstimate:
    x: np.ndarray
    f: np.ndarray
    atom: float
    method: str
    window: dict
    diagnostics: dict = field(default_factory=dict)

    @property
    def total_mass(self) -> float:
        ok = np.isfinite(self.f)
        return float(trapezoid(self.f[ok], self.x[ok])) if ok.sum() > 1 else 0.0

    @property
    def min_f(self) -> float:
        return float(np.nanmin(self.f))

    def mass_defect(self) -> float:
        return self.atom + self.total_mass - 1

    def summary(self) -> dict:
        return {"method": self.method, "window": self.window, "atom": self.atom,
                "total_mass": self.total_mass, "min_f": self.min_f, **self.diagnostics}

    @classmethod
    def from_function(cls, fn, x, atom: float = 0.0, method: str = "closed_form") -> "DensityEstimate":
        x = np.asarray(x, dtype=float)
        return cls(x, np.asarray(fn(x), dtype=float), atom, method, {})


def window_weights(t: np.ndarray, T: float, window: str = "fejer", sigma_w: float | None = None) -> np.ndarray:
    """Fejer ``(1 - |t|/T)_+`` or Gaussian ``exp(-t^2 / (2 sigma_w^2))`` weights."""
    if window == "fejer":
        return np.clip(1 - np.abs(t) / T, 0, None)
    if window == "gaussian":
        s = T / 4 if sigma_w is None else sigma_w
        return np.exp(-0.5 * (t / s) ** 2)
    raise ValueError(f"unknown window {window!r}")


def _fourier_sum(t, vals, x, dt):
    out = np.empty(x.size, dtype=complex)
    for i in range(0, x.size, CHUNK):
        xs = x[i:i + CHUNK]
        out[i:i + CHUNK] = np.exp(-1j * np.outer(xs, t)) @ vals
    return out * dt / (2 * math.pi)


def invert_direct(grid: CharFnGrid, atom: float, x_grid, window: str = "fejer",
                  sigma_w: float | None = None) -> DensityEstimate:
    """``f(x) = (1/2pi) sum_k w(t_k) (psi(t_k) - atom) exp(-i t_k x) dt``."""
    if not 0 <= atom <= 1:
        raise ValueError("atom must lie in [0, 1]")
    x = np.asarray(x_grid, dtype=float)
    w = window_weights(grid.t, grid.T, window, sigma_w)
    g = _fourier_sum(grid.t, w * (grid.psi - atom), x, grid.dt)
    far = np.abs(grid.t) >= grid.T / 2
    atom_flag = bool(atom > np.abs(grid.psi[far]).min() + 1e-6)
    if atom_flag:
        warnings.warn("atom exceeds min |psi| at large |t|; the atom is probably wrong", stacklevel=2)
    diag = {"imag_residue": float(np.abs(g.imag).max()), "atom_warning": atom_flag,
            "neg_undershoot": float(max(0.0, -g.real.min()))}
    return DensityEstimate(x, g.real, atom, "direct", {"name": window, "T": grid.T, "sigma_w": sigma_w}, diag)


def invert_derivative(grid: CharFnGrid, x_grid, window: str = "fejer", sigma_w: float | None = None,
                      x_min: float = 0.1, psi_prime: np.ndarray | None = None) -> DensityEstimate:
    """Density from ``psi'``: ``f(x) = Re(-i g(x) / x)`` with ``g`` the windowed inverse of ``psi'``.

    Points with ``|x| < x_min`` are returned as NaN. The atom is not needed.
    """
    if x_min <= 0:
        raise ValueError("x_min must be positive")
    x = np.asarray(x_grid, dtype=float)
    dpsi = grid.derivative() if psi_prime is None else np.asarray(psi_prime)
    w = window_weights(grid.t, grid.T, window, sigma_w)
    keep = np.abs(x) >= x_min
    f = np.full(x.size, np.nan)
    g = _fourier_sum(grid.t, w * dpsi, x[keep], grid.dt)
    dens = -1j * g / x[keep]
    f[keep] = dens.real
    diag = {"imag_residue": float(np.abs(dens.imag).max()) if keep.any() else 0.0, "x_min": x_min}
    return DensityEstimate(x, f, 0.0, "derivative", {"name": window, "T": grid.T, "sigma_w": sigma_w}, diag)


def bw_silverman(x: np.ndarray) -> float:
    std = np.std(x)
    q75, q25 = np.percentile(x, [75, 25])
    a = min(std, (q75 - q25) / 1.34) if q75 > q25 else std
    return 0.9 * a * x.size ** (-0.2)


def kde(sample, bandwidth="silverman", x_grid=None, bins_per_bw: int = 20) -> DensityEstimate:
    """Gaussian kernel estimate of the continuous part from a sample of ``W``.

    Only nonzero values enter the kernel sum; the estimate is scaled by the
    non-atom fraction and the atom is the extinct fraction. Large samples are
    handled by linear binning and FFT convolution.
    """
    if isinstance(sample, WSample):
        values, atom = sample.values, sample.extinct_fraction()
        nz = values[sample.extinct_at < 0]
        nz = nz[nz != 0]
    else:
        values = np.asarray(sample, dtype=float)
        nz = values[values != 0]
        atom = 1 - nz.size / values.size if values.size else 0.0
    if nz.size == 0:
        raise ValueError("all values are zero")
    if nz.size < 100:
        raise ValueError("kde needs at least 100 nonzero values")
    h = bw_silverman(nz) if bandwidth == "silverman" else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    lo, hi = nz.min() - 5 * h, nz.max() + 5 * h
    step = h / bins_per_bw
    nb = int(math.ceil((hi - lo) / step)) + 1
    centers = lo + step * np.arange(nb)
    pos = (nz - lo) / step
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    counts = np.bincount(i0, 1 - frac, minlength=nb + 1)[:nb] + np.bincount(i0 + 1, frac, minlength=nb + 1)[:nb]
    half = int(math.ceil(5 * bins_per_bw))
    kx = step * np.arange(-half, half + 1)
    kern = np.exp(-0.5 * (kx / h) ** 2) / (h * math.sqrt(2 * math.pi))
    dens = fftconvolve(counts, kern, mode="same") / nz.size * (1 - atom)
    if x_grid is None:
        x = centers
        f = dens
    else:
        x = np.asarray(x_grid, dtype=float)
        f = np.interp(x, centers, dens, left=0.0, right=0.0)
    return DensityEstimate(x, f, atom, "kde", {"name": "gaussian_kernel", "bandwidth": h},
                           {"n_nonzero": int(nz.size)})


def compare(a: DensityEstimate, b, region=None) -> tuple[float, float]:
    """``(L1, sup)`` discrepancy over ``region``; ``b`` is interpolated onto ``a.x``.

    ``b`` may also be a callable closed form.
    """
    if callable(b):
        b = DensityEstimate.from_function(b, a.x)
    lo = max(a.x.min(), b.x.min())
    hi = min(a.x.max(), b.x.max())
    if region is not None:
        lo, hi = max(lo, region[0]), min(hi, region[1])
    if lo >= hi:
        raise ValueError("density estimates have disjoint ranges")
    sel = (a.x >= lo) & (a.x <= hi)
    x = a.x[sel]
    fb = np.interp(x, b.x, b.f)
    d = np.abs(a.f[sel] - fb)
    ok = np.isfinite(d)
    if ok.sum() < 2:
        raise ValueError("no overlapping finite values")
    return float(trapezoid(d[ok], x[ok])), float(d[ok].max())
