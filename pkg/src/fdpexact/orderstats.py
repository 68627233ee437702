"""Joint c.d.f. of uniform order statistics and the rejection-count kernels.

``psi(t)`` is ``P(U_(1) <= t_1, ..., U_(k) <= t_k)`` for ``k`` i.i.d.
uniforms. Two recursions compute it, Steck's and Bolshev's, kept as
separate code paths so that each can check the other. Steck's recursion
is the production path; it is stable in float64 up to the sizes this
package allows. Bolshev's recursion, ``1 - sum(...)``, loses relative
accuracy whenever a prefix probability is small and the loss is then
amplified by binomial factors, so it is always run at the precision its
own forward error bound demands.

The kernels ``d_su`` / ``d_sd`` give the law of the number of rejections
of step-up / step-down procedures under i.i.d. uniform p-values.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .exceptions import DomainError, PrecisionWarning
from .precision import PrecisionConfig, resolve_precision

__all__ = [
    "ProbVector",
    "psi",
    "psi_steck",
    "psi_bolshev",
    "psi_prefixes",
    "steck_prefixes_batch",
    "d_su",
    "d_sd",
    "d_su_vector",
    "d_sd_vector",
    "stirling",
    "stirling_table",
    "binomial_moment",
]

# Bolshev is never run with fewer bits than this, nor more.
_BOLSHEV_GUARD_BITS = 64
_BOLSHEV_MAX_BITS = 1 << 14


def _as_psi_input(t) -> np.ndarray:
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size and (np.any(~np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0):
        raise DomainError("psi: all entries of t must lie in [0, 1]")
    return t


def _suffix_min(t: np.ndarray) -> np.ndarray:
    # U_(j) <= U_(i) for j < i, so the event only depends on the suffix minima.
    return np.minimum.accumulate(t[::-1])[::-1]


def _log_factorials(n: int) -> np.ndarray:
    return gammaln(np.arange(n + 1) + 1.0)


# ---------------------------------------------------------------------------
# float64 recursions
# ---------------------------------------------------------------------------


def steck_prefixes_batch(T) -> tuple[np.ndarray, np.ndarray]:
    """Steck's recursion for a batch of nondecreasing vectors, in float64.

    Parameters
    ----------
    T : array_like, shape (B, k)
        Each row is a nondecreasing vector with entries in [0, 1].

    Returns
    -------
    psi : ndarray, shape (B, k + 1)
        ``psi[b, j]`` is the probability for the length-``j`` prefix of row
        ``b``; column 0 is one.
    cancellation : ndarray, shape (B,)
        Sum over steps of the magnitudes that were added and subtracted; the
        rounding error is of order ``unit_roundoff * cancellation``.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    B, k = T.shape
    lf = _log_factorials(k)
    psi = np.empty((B, k + 1))
    psi[:, 0] = 1.0
    cancel = np.zeros(B)
    with np.errstate(divide="ignore", invalid="ignore"):
        for n in range(1, k + 1):
            tn = T[:, n - 1]
            lead = tn**n
            if n >= 2:
                j = np.arange(n - 1)
                logc = lf[n] - lf[j] - lf[n - j]
                gap = np.maximum(tn[:, None] - T[:, : n - 1], 0.0)
                terms = np.exp(logc + xlogy(n - j, gap)) * psi[:, : n - 1]
                tsum = terms.sum(axis=1)
            else:
                tsum = np.zeros(B)
            psi[:, n] = lead - tsum
            cancel += lead + np.abs(tsum)
    return psi, cancel


def _bolshev_prefixes_double(t: np.ndarray) -> tuple[np.ndarray, float]:
    k = t.size
    lf = _log_factorials(k)
    psi = np.empty(k + 1)
    psi[0] = 1.0
    cancel = 0.0
    with np.errstate(divide="ignore"):
        for n in range(1, k + 1):
            i = np.arange(1, n + 1)
            logc = lf[n] - lf[i] - lf[n - i]
            terms = np.exp(logc + xlogy(i, 1.0 - t[n - i])) * psi[n - i]
            s = terms.sum()
            psi[n] = 1.0 - s
            cancel += 1.0 + abs(s)
    return psi, cancel


def _bolshev_log_amplification(t: np.ndarray) -> float:
    """log of a first-order bound on Bolshev's error in units of roundoff.

    ``A_n = (n + 1) + sum_i C(n, i) (1 - t_{n-i+1})^i A_{n-i}``, ``A_0 = 0``.
    All quantities are positive so the bound itself is computed stably.
    """
    k = t.size
    lf = _log_factorials(k)
    logA = np.full(k + 1, -np.inf)
    with np.errstate(divide="ignore"):
        for n in range(1, k + 1):
            i = np.arange(1, n + 1)
            logc = lf[n] - lf[i] - lf[n - i] + xlogy(i, 1.0 - t[n - i])
            prop = logsumexp(logc + logA[n - i]) if n > 1 else -np.inf
            logA[n] = np.logaddexp(math.log(n + 1), prop)
    return float(logA[k])


# ---------------------------------------------------------------------------
# mpmath recursions
# ---------------------------------------------------------------------------


def _steck_prefixes_mp(t, bits: int, complement: bool = False):
    # complement=True evaluates at 1 - t with the subtraction done in mpmath
    with mpmath.workprec(bits):
        tt = [mpmath.mpf(float(x)) for x in t]
        if complement:
            tt = [1 - x for x in tt]
        k = len(tt)
        psi = [mpmath.mpf(1)]
        cancel = mpmath.mpf(0)
        for n in range(1, k + 1):
            tn = tt[n - 1]
            lead = tn**n
            acc = mpmath.mpf(0)
            c = mpmath.mpf(1)
            for j in range(n - 1):
                acc += c * (tn - tt[j]) ** (n - j) * psi[j]
                c = c * (n - j) / (j + 1)
            psi.append(lead - acc)
            cancel += lead + abs(acc)
        return psi, cancel


def _bolshev_prefixes_mp(t, bits: int):
    with mpmath.workprec(bits):
        tt = [mpmath.mpf(float(x)) for x in t]
        k = len(tt)
        psi = [mpmath.mpf(1)]
        for n in range(1, k + 1):
            acc = mpmath.mpf(0)
            c = mpmath.mpf(1)
            for i in range(1, n + 1):
                c = c * (n - i + 1) / i
                acc += c * (1 - tt[n - i]) ** i * psi[n - i]
            psi.append(1 - acc)
        return psi


# ---------------------------------------------------------------------------
# public psi API
# ---------------------------------------------------------------------------


def _finish(value, info, prec: PrecisionConfig, k: int, full_output: bool):
    clamped = min(max(value, 0), 1)
    excess = abs(float(value - clamped))
    info["clamped"] = excess
    warn = info.get("cancellation_error", 0.0) > prec.sum_tolerance * max(k, 1) or excess > prec.sum_tolerance
    info["precision_warning"] = bool(warn)
    if warn:
        warnings.warn(
            f"psi ({info['method']}, k={k}): estimated rounding error "
            f"{info.get('cancellation_error', 0.0):.3g} / clamp {excess:.3g} exceeds tolerance",
            PrecisionWarning,
            stacklevel=3,
        )
    out = float(clamped) if prec.is_double else clamped
    if full_output:
        return out, info
    return out


def psi_steck(t, prec: PrecisionConfig | None = None, *, full_output: bool = False):
    """``Psi_k(t)`` by Steck's recursion.

    ``Psi_k(t) = t_k^k - sum_{j=0}^{k-2} C(k, j) (t_k - t_{j+1})^{k-j} Psi_j(t_1..t_j)``.

    Returns a float in double mode and an ``mpmath.mpf`` in bigfloat mode.
    With ``full_output=True`` a diagnostics dict is also returned.
    """
    t = _suffix_min(_as_psi_input(t))
    k = t.size
    prec = resolve_precision(prec, k)
    if prec.is_double:
        p, cancel = steck_prefixes_batch(t[None, :])
        value, cancel = p[0, k], float(cancel[0])
    else:
        p, cancel = _steck_prefixes_mp(t, prec.mantissa_bits)
        value, cancel = p[k], float(cancel)
    info = {"method": "steck", "cancellation_error": cancel * prec.unit_roundoff}
    return _finish(value, info, prec, k, full_output)


def psi_bolshev(t, prec: PrecisionConfig | None = None, *, full_output: bool = False):
    """``Psi_k(t)`` by Bolshev's recursion.

    ``Psi_k(t) = 1 - sum_{i=1}^{k} C(k, i) (1 - t_{k-i+1})^i Psi_{k-i}(t_1..t_{k-i})``.

    The recursion runs natively in float64 only when its error bound allows;
    otherwise mpmath is used with enough extra bits to absorb the bound. The
    result is returned in the configured type.
    """
    t = _suffix_min(_as_psi_input(t))
    k = t.size
    prec = resolve_precision(prec, k)
    amp = _bolshev_log_amplification(t) / math.log(2.0) if k else 0.0
    if prec.is_double and amp - 53 <= -47:  # bound below ~7e-15
        p, _ = _bolshev_prefixes_double(t)
        value, bits = p[k], 53
    else:
        floor = 53 if prec.is_double else prec.mantissa_bits
        bits = int(min(max(math.ceil(amp) + _BOLSHEV_GUARD_BITS, floor), _BOLSHEV_MAX_BITS))
        value = _bolshev_prefixes_mp(t, bits)[k]
        if prec.is_double:
            value = float(value)
        else:
            with prec.workprec():
                value = +value
    err = 2.0 ** (amp - bits) if amp - bits > -1000 else 0.0
    info = {"method": "bolshev", "working_bits": bits, "cancellation_error": float(err)}
    return _finish(value, info, prec, k, full_output)


def _affine_params(t: np.ndarray):
    """Return (nu1, nu2) when t_j = nu1 + j*nu2, else None."""
    k = t.size
    if k < 2:
        return None
    d = np.diff(t)
    nu2 = (t[-1] - t[0]) / (k - 1)
    scale = max(abs(nu2), 1e-300)
    if np.max(np.abs(d - nu2)) > 1e-13 * max(scale, 1e-3):
        return None
    nu1 = t[0] - nu2
    if not (0.0 <= nu1 + nu2 <= nu1 + k * nu2 <= 1.0 + 1e-15):
        return None
    return nu1, nu2


def psi(t, prec: PrecisionConfig | None = None, *, full_output: bool = False):
    """``P(U_(1) <= t_1, ..., U_(k) <= t_k)`` for ``k`` i.i.d. uniforms.

    Index-affine inputs use the closed form
    ``(nu1 + nu2) (nu1 + (k + 1) nu2)^(k - 1)``. Otherwise both recursions run
    and Steck's value is returned; their absolute difference is reported as
    ``discrepancy`` in the diagnostics.
    """
    t = _as_psi_input(t)
    k = t.size
    prec = resolve_precision(prec, k)
    if k == 0:
        return (1.0, {"method": "trivial", "precision_warning": False}) if full_output else 1.0
    t = _suffix_min(t)
    aff = _affine_params(t)
    if aff is not None:
        nu1, nu2 = aff
        with prec.workprec():
            if prec.is_double:
                value = (nu1 + nu2) * (nu1 + (k + 1) * nu2) ** (k - 1)
            else:
                n1, n2 = mpmath.mpf(nu1), mpmath.mpf(nu2)
                value = (n1 + n2) * (n1 + (k + 1) * n2) ** (k - 1)
        info = {"method": "affine-closed-form", "nu1": nu1, "nu2": nu2}
        return _finish(value, info, prec, k, full_output)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrecisionWarning)
        vs, is_ = psi_steck(t, prec, full_output=True)
        vb, ib = psi_bolshev(t, prec, full_output=True)
    info = {
        "method": "steck",
        "cancellation_error": is_["cancellation_error"],
        "discrepancy": abs(float(vs - vb)),
        "bolshev_bits": ib["working_bits"],
    }
    return _finish(vs, info, prec, k, full_output)


def psi_prefixes(
    t, prec: PrecisionConfig | None = None, *, complement: bool = False
) -> tuple[np.ndarray, float]:
    """All prefix probabilities ``Psi_j(t_1..t_j)`` for ``j = 0..k`` by Steck.

    With ``complement=True`` the prefixes of ``1 - t`` are returned; in
    bigfloat mode the subtraction is then done at full working precision.

    Returns a float64 array (double mode) or an object array of mpf
    (bigfloat mode), together with the estimated cancellation error.
    """
    t = _as_psi_input(t)
    if prec is None or prec.is_double or not complement:
        t = _suffix_min(1.0 - t if complement else t)
        complement = False
    else:
        t = np.maximum.accumulate(t[::-1])[::-1]  # suffix max of t = suffix min of 1 - t
    prec = resolve_precision(prec, t.size)
    if prec.is_double:
        p, cancel = steck_prefixes_batch(t[None, :])
        return p[0], float(cancel[0]) * prec.unit_roundoff
    p, cancel = _steck_prefixes_mp(t, prec.mantissa_bits, complement)
    return np.array(p, dtype=object), float(cancel) * prec.unit_roundoff


# ---------------------------------------------------------------------------
# rejection-count kernels
# ---------------------------------------------------------------------------


@dataclass
class ProbVector:
    """A distribution over ``{0, ..., m}``.

    ``probs`` is float64 and clamped to [0, 1]. In bigfloat mode ``exact``
    holds the unrounded mpf values.
    """

    probs: np.ndarray
    sum_error: float
    cancellation_error: float = 0.0
    precision_warning: bool = False
    exact: np.ndarray | None = None

    def __len__(self):
        return self.probs.size

    def __getitem__(self, k):
        return self.probs[k]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    @property
    def m(self) -> int:
        return self.probs.size - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def survival(self) -> np.ndarray:
        """``P(K >= k)`` for ``k = 0..m``."""
        return np.cumsum(self.probs[::-1])[::-1]


def _check_threshold_values(t) -> np.ndarray:
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size == 0:
        raise DomainError("threshold must have at least one entry")
    if np.any(~np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0:
        raise DomainError("threshold entries must lie in [0, 1]")
    if np.any(np.diff(t) < -1e-15):
        raise DomainError("threshold must be nondecreasing")
    return np.maximum.accumulate(t)


def _to_probvector(raw, cancel: float, prec: PrecisionConfig, what: str) -> ProbVector:
    if prec.is_double:
        vals = np.asarray(raw, dtype=float)
        total = float(vals.sum())
        exact = None
    else:
        with prec.workprec():
            total_mp = mpmath.fsum(raw)
            total = float(total_mp)
            sum_err = abs(total_mp - 1)
        vals = np.array([float(x) for x in raw])
        exact = np.asarray(raw, dtype=object)
    clamped = np.clip(vals, 0.0, 1.0)
    excess = float(np.max(np.abs(clamped - vals))) if vals.size else 0.0
    sum_error = float(sum_err) if not prec.is_double else abs(total - 1.0)
    warn = sum_error > prec.sum_tolerance or excess > prec.sum_tolerance
    if warn:
        warnings.warn(
            f"{what}: probabilities sum to 1{sum_error:+.3g} (clamped {excess:.3g}); "
            f"tolerance {prec.sum_tolerance:g} in {prec} mode",
            PrecisionWarning,
            stacklevel=3,
        )
    return ProbVector(clamped, sum_error, cancel, bool(warn), exact)


def d_su_vector(t, prec: PrecisionConfig | None = None) -> ProbVector:
    """``D_m(t, k) = C(m, k) t_k^k Psi_{m-k}(1 - t_m, ..., 1 - t_{k+1})`` for all k.

    This is the law of the number of rejections of ``SU(t)`` when the
    ``m`` p-values are i.i.d. uniform.
    """
    t = _check_threshold_values(t)
    m = t.size
    prec = resolve_precision(prec, m)
    P, cancel = psi_prefixes(t[::-1], prec, complement=True)
    k = np.arange(m + 1)
    tk = np.concatenate(([1.0], t))
    if prec.is_double:
        lf = _log_factorials(m)
        logc = lf[m] - lf[k] - lf[m - k]
        raw = np.exp(logc + xlogy(k, tk)) * P[m - k]
    else:
        with prec.workprec():
            raw = [mpmath.binomial(m, kk) * mpmath.mpf(tk[kk]) ** kk * P[m - kk] for kk in k]
    return _to_probvector(raw, cancel, prec, "d_su")


def d_sd_vector(t, prec: PrecisionConfig | None = None) -> ProbVector:
    """``D~_m(t, k) = C(m, k) (1 - t_{k+1})^{m-k} Psi_k(t_1, ..., t_k)`` for all k."""
    t = _check_threshold_values(t)
    m = t.size
    prec = resolve_precision(prec, m)
    P, cancel = psi_prefixes(t, prec)
    k = np.arange(m + 1)
    upper = np.concatenate((1.0 - t, [1.0]))  # 1 - t_{k+1}; the k = m factor is 1
    if prec.is_double:
        lf = _log_factorials(m)
        logc = lf[m] - lf[k] - lf[m - k]
        raw = np.exp(logc + xlogy(m - k, upper)) * P
    else:
        with prec.workprec():
            tt = [mpmath.mpf(float(x)) for x in t] + [mpmath.mpf(0)]
            raw = [mpmath.binomial(m, kk) * (1 - tt[kk]) ** (m - kk) * P[kk] for kk in k]
    return _to_probvector(raw, cancel, prec, "d_sd")


def _check_k(k: int, m: int) -> int:
    if int(k) != k or not 0 <= k <= m:
        raise IndexError(f"k must be an integer in [0, {m}], got {k}")
    return int(k)


def d_su(t, k: int, prec: PrecisionConfig | None = None) -> float:
    """Single entry ``D_m(t, k)``."""
    t = _check_threshold_values(t)
    k = _check_k(k, t.size)
    return float(d_su_vector(t, prec).probs[k])


def d_sd(t, k: int, prec: PrecisionConfig | None = None) -> float:
    """Single entry ``D~_m(t, k)``."""
    t = _check_threshold_values(t)
    k = _check_k(k, t.size)
    return float(d_sd_vector(t, prec).probs[k])


# ---------------------------------------------------------------------------
# Stirling numbers and binomial moments
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def stirling_table(s_max: int) -> tuple[tuple[int, ...], ...]:
    """Rows ``0..s_max`` of Stirling numbers of the second kind (exact ints).

    Row ``s`` has entries for ``l = 0..s``.
    """
    rows = [(1,)]
    for s in range(s_max):
        prev = rows[-1]
        row = [0] * (s + 2)
        for l in range(1, s + 2):
            left = prev[l] if l <= s else 0
            row[l] = l * left + prev[l - 1]
        rows.append(tuple(row))
    return tuple(rows)


def stirling(s: int, l: int) -> int:
    """Stirling number of the second kind ``S(s, l)``; zero outside the triangle."""
    if s < 0 or l < 0 or l > s:
        return 0
    return stirling_table(s)[s][l]


def binomial_moment(n: int, q: float, s: int) -> float:
    """``E[X^s]`` for ``X ~ Binomial(n, q)`` via Stirling numbers.

    ``sum_{l=1}^{min(s, n)} n!/(n-l)! S(s, l) q^l``.
    """
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q}")
    if n < 0 or s < 1:
        raise DomainError("need n >= 0 and s >= 1")
    return float(sum(math.perm(n, l) * stirling(s, l) * q**l for l in range(1, min(s, n) + 1)))
