"""Exact step-down quantities under the unconditional independent model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .exceptions import DomainError, UnsupportedCaseError
from .models import AlternativeCdf, MixtureCdf
from .orderstats import ProbVector, d_sd_vector, psi, steck_prefixes_batch
from .precision import PrecisionConfig, resolve_precision
from .stepup import _check_pi0, _values

__all__ = [
    "JointRejectionLaw",
    "sd_rejection_pmf",
    "sd_joint_law",
    "sd_fdr",
    "sd_fdr_upper_bound",
    "lsd_fdr_dirac_uniform",
    "sd_power",
    "sd_conditional_false_count",
]


def sd_rejection_pmf(t, G: MixtureCdf, prec: PrecisionConfig | None = None) -> ProbVector:
    """Law of ``|SD(t)|``: ``P(|SD(t)| = k) = D~_m((G(t_j))_j, k)``."""
    return d_sd_vector(G(_values(t)), prec)


def _sd_kernel(g: np.ndarray, prec) -> np.ndarray:
    if g.size == 0:
        return np.ones(1)
    return d_sd_vector(g, prec).probs


def _ratio_threshold(g: np.ndarray, base: float) -> np.ndarray:
    # remaining p-values are uniform on (base, 1] after rescaling; all ones when base = 1
    if base >= 1.0:
        return np.ones_like(g)
    return np.clip((g - base) / (1.0 - base), 0.0, 1.0)


def _sd_kernel_batch(g: np.ndarray) -> np.ndarray:
    """Float64 ``D~_n(g_b, k)`` for every row ``g_b`` of a (B, n) array; shape (B, n + 1)."""
    B, n = g.shape
    if n == 0:
        return np.ones((B, 1))
    g = np.maximum.accumulate(np.clip(g, 0.0, 1.0), axis=1)
    P, _ = steck_prefixes_batch(g)
    k = np.arange(n + 1)
    lf = gammaln(np.arange(n + 1) + 1.0)
    upper = np.concatenate((1.0 - g, np.ones((B, 1))), axis=1)
    with np.errstate(divide="ignore"):
        return np.exp(lf[n] - lf[k] - lf[n - k] + xlogy(n - k, upper)) * np.maximum(P, 0.0)


def _ratio_batch(g: np.ndarray, base: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (g - base[:, None]) / (1.0 - base[:, None])
    r = np.where((base >= 1.0)[:, None], 1.0, r)
    return np.clip(r, 0.0, 1.0)


def _sd_fdr_batch(f0: np.ndarray, g: np.ndarray, pi0: float) -> np.ndarray:
    """Step-down FDR for a batch of (F0, G) evaluations, float64."""
    B, m = g.shape
    outer = _sd_kernel_batch(g[:, : m - 1])
    total = np.zeros(B)
    for k in range(1, m + 1):
        inner = _sd_kernel_batch(_ratio_batch(g[:, k:], g[:, k - 1]))
        kp = np.arange(k, m + 1)
        total += f0[:, k - 1] * outer[:, k - 1] * (inner / kp).sum(axis=1)
    return np.clip(pi0 * m * total, 0.0, 1.0)


def _sd_power_batch(f1: np.ndarray, g: np.ndarray) -> np.ndarray:
    m = g.shape[1]
    outer = _sd_kernel_batch(g[:, : m - 1])
    return np.clip((f1 * outer).sum(axis=1), 0.0, 1.0)


@dataclass
class JointRejectionLaw:
    """``P[k, k2] = P(|SD(t)| = k, |SD(t')| = k2)`` where ``t'_j = t_{j+1}``."""

    matrix: np.ndarray

    @property
    def m(self) -> int:
        return self.matrix.shape[0] - 1

    def marginal_first(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def marginal_second(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


def _joint_from_g(g_ext: np.ndarray, prec) -> np.ndarray:
    """Joint law from the transformed extended threshold ``(g_1, ..., g_{m+1})``."""
    m = g_ext.size - 1
    outer = _sd_kernel(g_ext[:m], prec)
    P = np.zeros((m + 1, m + 1))
    for k in range(m + 1):
        if outer[k] == 0.0:
            continue
        base = g_ext[k]  # g_{k+1} in 1-based indexing
        inner = _sd_kernel(_ratio_threshold(g_ext[k + 1 :], base), prec)
        P[k, k:] = outer[k] * inner
    return P


def sd_joint_law(t_extended, G: MixtureCdf, prec: PrecisionConfig | None = None) -> JointRejectionLaw:
    """Joint law of the rejection counts of ``SD(t)`` and ``SD(t')``.

    ``t_extended`` has ``m + 1`` entries; ``t`` is its first ``m`` and ``t'``
    its last ``m``.
    """
    te = _values(t_extended)
    if te.size < 2:
        raise DomainError("the extended threshold needs at least two entries")
    prec = resolve_precision(prec, te.size - 1)
    return JointRejectionLaw(_joint_from_g(G(te), prec))


def _general_sd_fdr(f0: np.ndarray, g: np.ndarray, pi0: float, prec) -> float:
    m = g.size
    outer = _sd_kernel(g[: m - 1], prec)
    total = 0.0
    for k in range(1, m + 1):
        w = outer[k - 1]
        if w == 0.0:
            continue
        inner = _sd_kernel(_ratio_threshold(g[k:], g[k - 1]), prec)
        kp = np.arange(k, m + 1)
        total += f0[k - 1] * w * float(np.sum(inner / kp))
    return min(max(pi0 * m * total, 0.0), 1.0)


def sd_fdr(t, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None) -> float:
    """Exact ``FDR(SD(t))``.

    ``pi0 m sum_k sum_{k2 >= k} (t_k / k2) D~_{m-1}((G(t_j))_j, k - 1)
    D~_{m-k}(r^(k), k2 - k)`` with ``r^(k)_j = (G(t_{k+j}) - G(t_k)) / (1 - G(t_k))``.
    """
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    prec = resolve_precision(prec, tv.size)
    if pi0 == 0.0:
        return 0.0
    g = MixtureCdf(pi0, F1)(tv)
    return _general_sd_fdr(tv, g, pi0, prec)


def sd_fdr_upper_bound(t, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None) -> float:
    """``pi0 m sum_k (t_k / k) D~_{m-1}((G(t_j))_j, k - 1)``.

    Bounds ``sd_fdr`` from above when ``t_k / k`` is nondecreasing.
    """
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    m = tv.size
    prec = resolve_precision(prec, m)
    g = MixtureCdf(pi0, F1)(tv)
    outer = _sd_kernel(g[: m - 1], prec)
    k = np.arange(1, m + 1)
    return float(pi0 * m * np.sum(tv / k * outer))


def lsd_fdr_dirac_uniform(alpha: float, m: int, pi0: float) -> float:
    """Closed double sum for the linear step-down FDR with Dirac-uniform alternatives."""
    pi0 = _check_pi0(pi0)
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    pi1 = 1.0 - pi0
    total = 0.0
    for k in range(1, m + 1):
        left = math.comb(m - 1, k - 1) * pi0 ** (m - k) * (pi1 + pi0 * alpha * k / m) ** (k - 2)
        if left == 0.0:
            continue
        for j in range(k, m + 1):
            term = (k / j) * math.comb(m - k, j - k)
            term *= (alpha * (j - k + 1) / m) ** (j - k - 1)
            term *= (1.0 - alpha * (j + 1) / m) ** (m - j) if j < m else 1.0
            total += left * term
    return pi0 * alpha**2 / m * (pi1 + pi0 * alpha / m) * total


def sd_power(t, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None) -> float:
    """``Pow(SD(t)) = sum_k F1(t_k) D~_{m-1}((G(t_j))_j, k - 1)``."""
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    if pi0 >= 1.0:
        raise DomainError("power is undefined when pi0 = 1 (no false nulls)")
    m = tv.size
    prec = resolve_precision(prec, m)
    g = MixtureCdf(pi0, F1)(tv)
    outer = _sd_kernel(g[: m - 1], prec)
    return float(min(max(np.sum(F1(tv) * outer), 0.0), 1.0))


def sd_conditional_false_count(
    t, pi0: float, F1: AlternativeCdf, k: int, j: int, prec: PrecisionConfig | None = None
) -> float:
    """``P(|H0 cap SD(t)| = j  given  |SD(t)| = k)``.

    Available for ``j = k``, for ``j = 0``, and for any ``j`` when ``F1`` is
    Dirac-uniform. Other combinations raise :class:`UnsupportedCaseError`.
    """
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    m = tv.size
    if int(k) != k or not 1 <= k <= m:
        raise DomainError(f"k must be an integer in [1, {m}], got {k}")
    if int(j) != j or not 0 <= j <= k:
        raise DomainError(f"j must be an integer in [0, {k}], got {j}")
    k, j = int(k), int(j)
    pi1 = 1.0 - pi0
    tk = tv[:k]
    dirac = F1.kind == "dirac_uniform"
    if not (j == k or j == 0 or dirac):
        raise UnsupportedCaseError(
            "the conditional false-count law is only available for j = k, j = 0 or a Dirac-uniform alternative"
        )
    if dirac:
        denom = float(psi(pi0 * tk + pi1, prec))
    else:
        denom = float(psi(MixtureCdf(pi0, F1)(tk), prec))
    if denom <= 0.0:
        raise DomainError(f"P(|SD(t)| = {k}) is zero; the conditional law is undefined")
    if dirac:
        num = math.comb(k, j) * pi0**j * pi1 ** (k - j) * float(psi(tk[k - j :], prec))
    elif j == k:
        num = pi0**k * float(psi(tk, prec))
    else:
        num = pi1**k * float(psi(F1(tk), prec))
    return min(max(num / denom, 0.0), 1.0)
