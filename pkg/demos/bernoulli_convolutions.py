"""Random series sum_k +-lambda^k and the affine equation Y = lambda Y +- 1.

For lambda = 1/2 the law is uniform on [-2, 2] and its characteristic
function prod_k cos(t / 2^k) = sin(2t) / (2t) decays like 1/t. For
lambda = 1/3 the law is a Cantor-type measure and the characteristic
function does not decay: along t = 3^k pi it stays near a fixed positive
value. The decay profile is evidence, not a proof, of the difference.

Run with ``python3 demos/bernoulli_convolutions.py``.
"""

import numpy as np
from scipy import stats

from bpre import SmoothingSpec, bernoulli_charfn, decay_report, smoothing_iterate

for lam in (1 / 2, 1 / 3):
    extra = 3.0 ** np.arange(10) * np.pi
    rep = decay_report(lambda t: bernoulli_charfn(lam, t), 1e4, extra_points=extra)
    print(f"lambda = {lam:.4f}: trend {rep.trend}")
    for (lo, hi), s in zip(rep.windows, rep.sups):
        print(f"  sup |psi| on [{lo:6.0f}, {hi:6.0f}]  {s:.4f}")

y = smoothing_iterate(SmoothingSpec.bernoulli(0.5), np.zeros(100_000), 40, rng=0)
ks = stats.kstest(y, stats.uniform(-2, 4).cdf).statistic
print(f"\n40 particle iterations of Y = Y/2 +- 1: Kolmogorov distance to U[-2, 2] = {ks:.4f}")
