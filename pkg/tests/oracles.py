"""Independent reference computations used by the tests.

None of these call into the recursions under test. Small-m oracles work by
exact cell enumeration: with cut points ``0 <= c_1 <= ... <= c_n <= 1`` the
decisions of SU/SD procedures only depend on which cell each p-value falls
in, so integrating over ``[0, 1]^m`` reduces to a finite multinomial sum.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate
from scipy.stats import binom, multivariate_normal, norm


def cell_probs(cdf, cuts):
    """``P(c_{j} < p <= c_{j+1})`` for j = 0..n with ``c_0 = -0`` and ``c_{n+1} = 1``."""
    vals = np.concatenate(([0.0], [cdf(c) for c in cuts], [1.0]))
    return np.diff(vals)


def _counts(cells, n_cuts, procedure):
    """Rejection count when cell ``c`` means ``p <= cut_{c+1}`` (0-based cells)."""
    s = sorted(cells)
    m = len(s)
    if procedure == "SU":
        k = 0
        for j in range(1, m + 1):
            if s[j - 1] <= j - 1:
                k = j
        return k
    k = 0
    for j in range(1, m + 1):
        if s[j - 1] <= j - 1:
            k = j
        else:
            break
    return k


def enumerate_indep(t, pi0, F1, procedure, H=None):
    """Exact law of ``(|R|, V, m1)`` under the independent model.

    Returns an array ``P[k, v, m1]``. ``H`` fixes the false-null pattern
    (conditional model); otherwise each ``H_i`` is Bernoulli(1 - pi0).
    """
    t = [float(x) for x in t]
    m = len(t)
    null = cell_probs(lambda x: x, t)
    alt = cell_probs(lambda x: float(F1(x)), t)
    P = np.zeros((m + 1, m + 1, m + 1))
    patterns = [tuple(H)] if H is not None else list(itertools.product((0, 1), repeat=m))
    for h in patterns:
        m1 = sum(h)
        ph = 1.0 if H is not None else (1 - pi0) ** m1 * pi0 ** (m - m1)
        if ph == 0.0:
            continue
        for cells in itertools.product(range(m + 1), repeat=m):
            pr = ph
            for c, hi in zip(cells, h):
                pr *= alt[c] if hi else null[c]
            if pr == 0.0:
                continue
            k = _counts(cells, m, procedure)
            v = sum(1 for c, hi in zip(cells, h) if not hi and c <= k - 1)
            P[k, v, m1] += pr
    return P


def summaries(P, pi0):
    """FDR, power, FNR, rejection pmf and the FDP c.d.f. from ``P[k, v, m1]``."""
    m = P.shape[0] - 1
    k = np.arange(m + 1)[:, None, None]
    v = np.arange(m + 1)[None, :, None]
    m1 = np.arange(m + 1)[None, None, :]
    fdp = v / np.maximum(k, 1)
    s = k - v
    out = {
        "fdr": float(np.sum(P * fdp)),
        "fnr": float(np.sum(P * (m1 - s) / np.maximum(m - k, 1))),
        "rejection_pmf": P.sum(axis=(1, 2)),
    }
    if pi0 < 1:
        out["power"] = float(np.sum(P * s)) / ((1 - pi0) * m)

    def cdf(x):
        return float(np.sum(P * (fdp <= x + 1e-12)))

    out["fdp_cdf"] = cdf
    out["moment"] = lambda order: float(np.sum(P * fdp**order))
    return out


def enumerate_sd_pair(t_ext, cdf=lambda x: x):
    """Joint law of ``|SD(t)|`` and ``|SD(t')|`` for m i.i.d. p-values with c.d.f. ``cdf``.

    ``t_ext`` has m + 1 entries; ``t`` is the first m, ``t'`` the last m.
    """
    t_ext = [float(x) for x in t_ext]
    m = len(t_ext) - 1
    probs = cell_probs(cdf, t_ext)
    P = np.zeros((m + 1, m + 1))
    for cells in itertools.product(range(m + 2), repeat=m):
        pr = float(np.prod([probs[c] for c in cells]))
        if pr == 0.0:
            continue
        # p <= t_k iff cell <= k - 1; p <= t'_k = t_{k+1} iff cell <= k
        k1 = _counts(cells, m, "SD")
        k2 = _counts([c - 1 for c in cells], m, "SD")
        P[k1, k2] += pr
    return P


def psi_cells(t):
    """``P(U_(1) <= t_1, ..., U_(k) <= t_k)`` by cell enumeration."""
    t = [float(x) for x in t]
    k = len(t)
    if k == 0:
        return 1.0
    probs = cell_probs(lambda x: x, t)
    total = 0.0
    for cells in itertools.product(range(k + 1), repeat=k):
        s = sorted(cells)
        if all(s[j] <= j for j in range(k)):
            total += float(np.prod([probs[c] for c in cells]))
    return total


def psi_simplex(t):
    """``k!`` times the volume of ``{u_1 <= ... <= u_k, u_j <= t_j}`` by nested quadrature (k <= 3)."""
    t = [float(x) for x in t]
    k = len(t)
    opts = {"epsabs": 1e-14, "epsrel": 1e-13}
    if k == 1:
        return t[0]
    if k == 2:
        val, _ = integrate.quad(lambda u1: max(t[1] - u1, 0.0), 0.0, t[0], **opts)
        return 2.0 * val
    if k == 3:
        def inner(u1):
            val, _ = integrate.quad(lambda u2: max(t[2] - u2, 0.0), u1, max(t[1], u1), **opts)
            return val

        val, _ = integrate.quad(inner, 0.0, t[0], **opts, limit=200)
        return 6.0 * val
    raise ValueError("k <= 3 only")


def bivariate_m2_fdr(procedure, t, m0, rho, mu):
    """FDR for two Gaussian test statistics with correlation ``rho`` in (-1, 1).

    The first ``m0`` hypotheses are null; false nulls have mean ``mu``.
    Cell probabilities are bivariate normal rectangle probabilities.
    """
    z = [norm.isf(x) for x in t]  # z_1 >= z_2
    edges = [math.inf, z[0], z[1], -math.inf]  # cell c: edges[c+1] <= X < edges[c]
    means = [0.0 if i < m0 else mu for i in range(2)]
    cov = [[1.0, rho], [rho, 1.0]]

    def rect(a1, b1, a2, b2):
        def F(x, y):
            if x == -math.inf or y == -math.inf:
                return 0.0
            x = min(x, 40.0)
            y = min(y, 40.0)
            return float(multivariate_normal.cdf([x, y], mean=means, cov=cov, abseps=1e-13, releps=1e-13))

        return F(b1, b2) - F(a1, b2) - F(b1, a2) + F(a1, a2)

    fdr = 0.0
    for c1 in range(3):
        for c2 in range(3):
            pr = rect(edges[c1 + 1], edges[c1], edges[c2 + 1], edges[c2])
            cells = (c1, c2)
            k = _counts(cells, 2, procedure)
            v = sum(1 for i, c in enumerate(cells) if i < m0 and c <= k - 1)
            fdr += pr * v / max(k, 1)
    return fdr


def chi_tan_grid(alpha, gamma, m, points=2_000_001):
    """Backward construction with a dense grid search on ``[0, t_{k+1}]``."""
    t_next = 1.0
    out = np.empty(m)
    for k in range(m, 0, -1):
        grid = np.linspace(0.0, t_next, points)
        q = np.minimum(1.0, m * grid / k)
        ok = binom.cdf(math.floor(alpha * k + 1e-9), k, q) >= 1.0 - gamma
        idx = np.nonzero(ok)[0]
        t_next = float(grid[idx.max()]) if idx.size else 0.0
        out[k - 1] = t_next
    return out


def binomial_moment_pmf(n, q, s):
    j = np.arange(n + 1)
    return float(np.sum(binom.pmf(j, n, q) * j.astype(float) ** s))


def gauss_tail_mp(z, dps=50):
    import mpmath

    with mpmath.workdps(dps):
        return float(mpmath.erfc(mpmath.mpf(z) / mpmath.sqrt(2)) / 2)


def within_se(exact, estimate, se, n_se=4.0):
    """Monte Carlo agreement: ``|exact - estimate| <= n_se * se``."""
    return abs(exact - estimate) <= n_se * se + 1e-15


def pmf_within_se(exact, estimate, se, n, n_se=4.0):
    """Elementwise Monte Carlo agreement for frequencies.

    Batch-means SEs are zero for cells that were never observed, so each SE is
    floored at the binomial value ``sqrt(p (1 - p) / n)`` of the exact ``p``.
    """
    exact, estimate, se = (np.asarray(a, dtype=float) for a in (exact, estimate, se))
    floor = np.sqrt(exact * (1.0 - exact) / n)
    return bool(np.all(np.abs(exact - estimate) <= n_se * np.maximum(se, floor) + 1e-15))
