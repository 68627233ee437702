"""Exact step-up quantities under the unconditional independent model.

Write ``g_j = G(t_j)`` and let ``P_n`` be the order-statistic probability of
the first ``n`` entries of ``(1 - g_m, ..., 1 - g_1)``. Every step-up
quantity is a weighted sum of the shifted kernels

    D_{m-l}((g_{j+l})_j, k - l) = C(m - l, k - l) g_k^(k - l) P_{m-k},

so one Steck pass gives all of them. The engine below works on batches of
(F0, F1) evaluations so that the EMN module can push quadrature nodes
through it in one go.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.special import gammaln, xlogy
from scipy.stats import binom

from .exceptions import DomainError, PrecisionWarning
from .models import AlternativeCdf, MixtureCdf
from .orderstats import ProbVector, d_su_vector, psi_prefixes, steck_prefixes_batch, stirling
from .precision import PrecisionConfig, resolve_precision
from .thresholds import Threshold

__all__ = [
    "FdpDistributionResult",
    "su_rejection_pmf",
    "su_conditional_false_count",
    "su_fdp_distribution",
    "su_fdp_cdf",
    "su_fdp_moment",
    "su_fdr",
    "su_power",
    "oracle_fdp_threshold",
    "chi_tan_threshold",
    "floor_frac",
]

_FLOOR_SNAP = 1e-9


def floor_frac(x: float, k):
    """``floor(x * k)`` with products within 1e-9 of an integer snapped up.

    Keeps ``0.29 * 100`` at 29 so that ``FDP <= x`` admits equality.
    """
    return np.floor(np.asarray(x * np.asarray(k, dtype=float)) + _FLOOR_SNAP).astype(int)


def _values(t) -> np.ndarray:
    if isinstance(t, Threshold):
        return t.values
    return Threshold(t).values


def _check_pi0(pi0: float) -> float:
    pi0 = float(pi0)
    if not 0.0 <= pi0 <= 1.0:
        raise DomainError(f"pi0 must lie in [0, 1], got {pi0}")
    return pi0


# ---------------------------------------------------------------------------
# batched engine
# ---------------------------------------------------------------------------


class _SuEngine:
    """Log shifted kernels for a batch of transformed thresholds ``g`` (B, m)."""

    def __init__(self, g: np.ndarray, prec: PrecisionConfig | None = None):
        g = np.clip(np.atleast_2d(np.asarray(g, dtype=float)), 0.0, 1.0)
        g = np.maximum.accumulate(g, axis=1)
        B, m = g.shape
        prec = resolve_precision(prec, m)
        self.B, self.m, self.g, self.prec = B, m, g, prec
        s = (1.0 - g)[:, ::-1]
        with np.errstate(divide="ignore"):
            if prec.is_double:
                P, cancel = steck_prefixes_batch(s)
                self.cancellation_error = cancel * prec.unit_roundoff
                self.logP = np.log(np.maximum(P, 0.0))
            else:
                rows, errs = [], []
                for b in range(B):
                    P, err = psi_prefixes(g[b, ::-1], prec, complement=True)
                    with prec.workprec():
                        rows.append([float(mpmath.log(x)) if x > 0 else -np.inf for x in P])
                    errs.append(err)
                self.logP = np.array(rows)
                self.cancellation_error = np.array(errs)
        self.precision_warning = bool(np.any(self.cancellation_error > prec.sum_tolerance * m))
        if self.precision_warning:
            warnings.warn(
                f"step-up kernels (m={m}): cancellation error {self.cancellation_error.max():.3g} "
                f"exceeds tolerance in {prec} mode",
                PrecisionWarning,
                stacklevel=3,
            )
        self._lf = gammaln(np.arange(m + 2) + 1.0)

    def log_kernel(self, shift: int) -> np.ndarray:
        """``log D_{m-l}(shift l, k - l)`` indexed by ``k = 0..m``; ``-inf`` for ``k < l``."""
        m, l = self.m, shift
        out = np.full((self.B, m + 1), -np.inf)
        k = np.arange(l, m + 1)
        n = m - l
        logc = self._lf[n] - self._lf[k - l] - self._lf[n - (k - l)]
        gk = np.concatenate((np.ones((self.B, 1)), self.g), axis=1)[:, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            out[:, k] = logc + xlogy(k - l, gk) + self.logP[:, m - k]
        return np.nan_to_num(out, nan=-np.inf)

    def kernel(self, shift: int) -> np.ndarray:
        return np.exp(self.log_kernel(shift))


def _su_fdr_arrays(eng: _SuEngine, f0: np.ndarray, pi0: float) -> np.ndarray:
    m = eng.m
    w = f0 / np.arange(1, m + 1)
    return np.clip(pi0 * m * np.sum(w * eng.kernel(1)[:, 1:], axis=1), 0.0, 1.0)


def _su_power_arrays(eng: _SuEngine, f1: np.ndarray) -> np.ndarray:
    return np.clip(np.sum(f1 * eng.kernel(1)[:, 1:], axis=1), 0.0, 1.0)


def _su_moment_arrays(eng: _SuEngine, f0: np.ndarray, pi0: float, s: int) -> np.ndarray:
    m = eng.m
    if pi0 == 0.0:
        return np.zeros(eng.B)
    k = np.arange(1, m + 1)
    total = np.zeros(eng.B)
    with np.errstate(divide="ignore"):
        logf0 = np.log(f0)
        for l in range(1, min(s, m) + 1):
            lead = math.log(math.perm(m, l)) + math.log(stirling(s, l)) + l * math.log(pi0)
            logw = lead + l * logf0 - s * np.log(k) + eng.log_kernel(l)[:, 1:]
            total += np.exp(logw).sum(axis=1)
    return np.clip(total, 0.0, 1.0)


def _su_fdp_cdf_arrays(eng: _SuEngine, f0: np.ndarray, pi0: float, x: float) -> np.ndarray:
    m = eng.m
    k = np.arange(1, m + 1)
    pmf = eng.kernel(0)
    g = eng.g
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(g > 0, np.clip(pi0 * f0 / g, 0.0, 1.0), 0.0)
    cond = binom.cdf(floor_frac(x, k)[None, :], k[None, :], q)
    return np.clip(pmf[:, 0] + np.sum(pmf[:, 1:] * cond, axis=1), 0.0, 1.0)


def _mixture_arrays(t: np.ndarray, pi0: float, F1: AlternativeCdf):
    f0 = t[None, :]
    f1 = F1(t)[None, :]
    g = pi0 * f0 + (1.0 - pi0) * f1
    return f0, f1, g


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def su_rejection_pmf(t, G: MixtureCdf, prec: PrecisionConfig | None = None) -> ProbVector:
    """Law of ``|SU(t)|``: ``P(|SU(t)| = k) = D_m((G(t_j))_j, k)``."""
    tv = _values(t)
    return d_su_vector(G(tv), prec)


def su_conditional_false_count(t, G: MixtureCdf, k: int):
    """Law of the false-rejection count given ``|SU(t)| = k``.

    Returns a frozen ``scipy.stats.binom(k, pi0 t_k / G(t_k))``.
    """
    tv = _values(t)
    m = tv.size
    if int(k) != k or not 1 <= k <= m:
        raise DomainError(f"k must be an integer in [1, {m}], got {k}")
    gk = G(tv[k - 1])
    if gk <= 0.0:
        raise DomainError(f"G(t_{k}) = 0: the event |SU(t)| = {k} has probability zero")
    q = min(max(G.pi0 * tv[k - 1] / gk, 0.0), 1.0)
    return binom(int(k), q)


@dataclass
class FdpDistributionResult:
    """Distribution of the step-up FDP.

    ``cdf(x)`` and ``moment(s)`` evaluate the exact formulas; moments are
    cached per order.
    """

    rejection_pmf: ProbVector
    conditional_success_prob: np.ndarray
    _engine: _SuEngine = field(repr=False)
    _f0: np.ndarray = field(repr=False)
    _pi0: float = 0.0
    _moments: dict = field(default_factory=dict, repr=False)

    def cdf(self, x: float) -> float:
        """``P(FDP <= x)``; ``x <= 0`` gives ``P(FDP = 0)`` and ``x >= 1`` gives 1."""
        if x >= 1.0:
            return 1.0
        return float(_su_fdp_cdf_arrays(self._engine, self._f0, self._pi0, max(float(x), 0.0))[0])

    def moment(self, s: int) -> float:
        if int(s) != s or s < 1:
            raise DomainError(f"moment order must be an integer >= 1, got {s}")
        if s not in self._moments:
            self._moments[s] = float(_su_moment_arrays(self._engine, self._f0, self._pi0, int(s))[0])
        return self._moments[s]

    @property
    def precision_warning(self) -> bool:
        return self._engine.precision_warning or self.rejection_pmf.precision_warning


def su_fdp_distribution(t, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None):
    """Build the :class:`FdpDistributionResult` for ``SU(t)``."""
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    f0, _, g = _mixture_arrays(tv, pi0, F1)
    eng = _SuEngine(g, prec)
    pmf = ProbVector(
        np.clip(eng.kernel(0)[0], 0.0, 1.0),
        abs(float(eng.kernel(0)[0].sum()) - 1.0),
        float(eng.cancellation_error[0]),
        eng.precision_warning,
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(g[0] > 0, np.clip(pi0 * tv / g[0], 0.0, 1.0), 0.0)
    return FdpDistributionResult(pmf, q, eng, f0, pi0)


def su_fdp_cdf(t, pi0: float, F1: AlternativeCdf, x: float, prec: PrecisionConfig | None = None) -> float:
    """``P(FDP(SU(t)) <= x)`` for ``x`` in (0, 1)."""
    if not 0.0 < x < 1.0:
        raise DomainError(f"x must lie in (0, 1), got {x}")
    return su_fdp_distribution(t, pi0, F1, prec).cdf(x)


def su_fdp_moment(t, pi0: float, F1: AlternativeCdf, s: int, prec: PrecisionConfig | None = None) -> float:
    """``E[FDP(SU(t))^s]`` through Stirling numbers of the second kind."""
    return su_fdp_distribution(t, pi0, F1, prec).moment(s)


def su_fdr(t, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None) -> float:
    """``FDR(SU(t)) = pi0 m sum_k (t_k / k) D_{m-1}((G(t_{j+1}))_j, k - 1)``."""
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    if pi0 == 0.0:
        return 0.0
    f0, _, g = _mixture_arrays(tv, pi0, F1)
    return float(_su_fdr_arrays(_SuEngine(g, prec), f0, pi0)[0])


def su_power(t, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None) -> float:
    """``Pow(SU(t)) = sum_k F1(t_k) D_{m-1}((G(t_{j+1}))_j, k - 1)``."""
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    if pi0 >= 1.0:
        raise DomainError("power is undefined when pi0 = 1 (no false nulls)")
    _, f1, g = _mixture_arrays(tv, pi0, F1)
    return float(_su_power_arrays(_SuEngine(g, prec), f1)[0])


def _general_su_fdr(t, f0_vals, f1_vals, pi0: float, prec=None) -> float:
    """Step-up FDR for arbitrary null/alternative c.d.f. values at ``t``."""
    f0 = np.asarray(f0_vals, dtype=float)[None, :]
    f1 = np.asarray(f1_vals, dtype=float)[None, :]
    g = pi0 * f0 + (1.0 - pi0) * f1
    return float(_su_fdr_arrays(_SuEngine(g, prec), f0, pi0)[0])


# ---------------------------------------------------------------------------
# FDP-controlling thresholds
# ---------------------------------------------------------------------------

_BISECT_TOL = 1e-12


def _binom_cdf_exact(j: int, k: int, q: float) -> float:
    """Binomial c.d.f. by summing the probability mass function."""
    if j >= k:
        return 1.0
    if j < 0:
        return 0.0
    return float(np.sum(binom.pmf(np.arange(j + 1), k, q)))


def _backward(m: int, feasible, grid_search: bool) -> np.ndarray:
    t = np.empty(m + 2)
    t[m + 1] = 1.0
    for k in range(m, 0, -1):
        hi = t[k + 1]
        if feasible(k, hi):
            t[k] = hi
            continue
        if grid_search:
            grid = np.linspace(0.0, hi, 4001)
            ok = np.array([feasible(k, x) for x in grid])
            if not ok.any():
                t[k] = 0.0
                continue
            i = int(np.max(np.nonzero(ok)[0]))
            lo, hi = grid[i], grid[min(i + 1, grid.size - 1)]
        else:
            lo = 0.0
            if not feasible(k, lo):
                t[k] = 0.0
                continue
        while hi - lo > _BISECT_TOL:
            mid = 0.5 * (lo + hi)
            if feasible(k, mid):
                lo = mid
            else:
                hi = mid
        t[k] = lo
    return t[1 : m + 1]


def _check_levels(alpha, gamma):
    if not alpha > 0.0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")


def oracle_fdp_threshold(alpha: float, gamma: float, pi0: float, F1: AlternativeCdf, m: int) -> Threshold:
    """Largest backward-nested threshold with ``P(X <= alpha k) >= 1 - gamma``.

    ``X ~ Binomial(k, pi0 t / G(t))``. The search assumes ``t -> pi0 t / G(t)``
    is nondecreasing, which holds for concave ``F1``; other alternatives get a
    warning and a grid search.
    """
    _check_levels(alpha, gamma)
    pi0 = _check_pi0(pi0)
    G = MixtureCdf(pi0, F1)

    def feasible(k, t):
        gt = G(t)
        if pi0 == 0.0:
            q = 0.0
        elif gt <= 0.0:
            q = 1.0 if t > 0 else _q_at_zero(pi0, F1)
        else:
            q = min(pi0 * t / gt, 1.0)
        return _binom_cdf_exact(int(floor_frac(alpha, k)), k, q) >= 1.0 - gamma

    grid = not F1.concave
    if grid:
        warnings.warn(
            "F1 is not flagged concave: pi0 t / G(t) may not be monotone, using grid search",
            UserWarning,
            stacklevel=2,
        )
    vals = _backward(int(m), feasible, grid)
    return Threshold(vals, "oracle", {"alpha": alpha, "gamma": gamma, "pi0": pi0})


def _q_at_zero(pi0: float, F1: AlternativeCdf) -> float:
    # limit of pi0 t / G(t) as t -> 0 estimated from a small t
    t = 1e-300
    g = pi0 * t + (1.0 - pi0) * F1(t)
    return min(pi0 * t / g, 1.0) if g > 0 else 1.0


def chi_tan_threshold(alpha: float, gamma: float, m: int) -> Threshold:
    """Backward-nested threshold with success probability ``min(1, m t / k)``."""
    _check_levels(alpha, gamma)
    m = int(m)

    def feasible(k, t):
        return _binom_cdf_exact(int(floor_frac(alpha, k)), k, min(1.0, m * t / k)) >= 1.0 - gamma

    vals = _backward(m, feasible, False)
    return Threshold(vals, "chi_tan", {"alpha": alpha, "gamma": gamma})

