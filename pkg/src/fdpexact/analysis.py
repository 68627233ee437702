"""Least favorable configurations, FDP variance and step-down FNR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .models import AlternativeCdf, MixtureCdf
from .precision import PrecisionConfig, resolve_precision
from .stepdown import _general_sd_fdr, _ratio_threshold, _sd_kernel, sd_fdr
from .stepup import _check_pi0, _general_su_fdr, _SuEngine, _values, su_fdr
from .thresholds import Threshold, linear

__all__ = [
    "ConditionAReport",
    "condition_a",
    "RecursionCheck",
    "s_mk_recursion_check",
    "var_fdp_lsu",
    "expected_inverse_rejections_affine",
    "var_extrema",
    "fnr_sd",
    "fnr_sd_by_duality",
    "fnr_su",
    "LfcReport",
    "lfc_fdr_compare",
]

_A_TOL = 1e-12


@dataclass(frozen=True)
class ConditionAReport:
    """Outcome of the step-down monotonicity check on a threshold.

    ``sequence[k-1]`` is ``A_k = sum_i t_k / (k + i) D~_{m-k}(r^(k), i)``
    with ``r^(k)_j = (t_{k+j} - t_k) / (1 - t_k)``; ``holds`` says whether it
    is nondecreasing up to ``1e-12``. ``first_violation`` is the first ``k``
    with ``A_{k+1} < A_k``.
    """

    holds: bool
    sequence: np.ndarray
    first_violation: int | None
    s_values: np.ndarray
    evaluated: bool = True


def condition_a(t, prec: PrecisionConfig | None = None, *, trust_linear: bool = False) -> ConditionAReport:
    """Evaluate the monotonicity condition under which Dirac-uniform alternatives maximize step-down FDR.

    With ``trust_linear=True`` a linear threshold is reported as satisfying
    the condition without evaluating it; the default always evaluates.
    """
    th = t if isinstance(t, Threshold) else Threshold(t)
    tv = th.values
    m = tv.size
    prec = resolve_precision(prec, m)
    if trust_linear and th.kind == "linear":
        return ConditionAReport(True, np.full(m, np.nan), None, np.full(m, np.nan), evaluated=False)
    s_vals = np.empty(m)
    for k in range(1, m + 1):
        inner = _sd_kernel(_ratio_threshold(tv[k:], tv[k - 1]), prec)
        s_vals[k - 1] = float(np.sum(k / np.arange(k, m + 1) * inner))
    seq = tv / np.arange(1, m + 1) * s_vals
    drops = np.nonzero(np.diff(seq) < -_A_TOL)[0]
    first = int(drops[0]) + 1 if drops.size else None
    return ConditionAReport(first is None, seq, first, s_vals)


@dataclass(frozen=True)
class RecursionCheck:
    ok: bool
    max_residual: float
    residuals: np.ndarray
    sum_identity_residual: float


def s_mk_recursion_check(m: int, alpha: float, tol: float = 1e-10) -> RecursionCheck:
    """Check ``S_{m,k} = a_{m,k} + b_{m,k} S_{m-1,k}`` for the linear threshold.

    ``S_{m-1,k}`` is taken on ``(alpha j / m)_{j <= m-1}``, the same slope.
    ``a = (k/m)(1 - alpha (m-k)/(m - alpha k))``,
    ``b = ((m - alpha)/m)((m - k)/(m - alpha k))``; both sides come from
    :func:`condition_a` at sizes ``m`` and ``m - 1``. Also checks
    ``a + b = 1 - (alpha/m)(m-k)/(m - alpha k)``.
    """
    if m < 2:
        raise DomainError("the recursion needs m >= 2")
    s_m = condition_a(linear(alpha, m)).s_values
    if s_m[-1] != 1.0 and abs(s_m[-1] - 1.0) > tol:
        raise AssertionError(f"S_(m,m) should be 1, got {s_m[-1]}")
    # the smaller problem keeps the slope alpha / m, i.e. level alpha (m - 1) / m
    s_prev = condition_a(linear(alpha * (m - 1) / m, m - 1)).s_values
    k = np.arange(1, m)
    a = (k / m) * (1.0 - alpha * (m - k) / (m - alpha * k))
    b = ((m - alpha) / m) * ((m - k) / (m - alpha * k))
    res = np.abs(s_m[:-1] - (a + b * s_prev[: m - 1]))
    ident = float(np.max(np.abs(a + b - (1.0 - (alpha / m) * (m - k) / (m - alpha * k)))))
    mx = float(res.max()) if res.size else 0.0
    return RecursionCheck(mx <= tol and ident <= tol, mx, res, ident)


def var_fdp_lsu(m: int, alpha: float, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None) -> float:
    """Variance of the linear step-up FDP.

    ``alpha pi0 sum_k (1/k) D_{m-1}((G(alpha (j+1)/m))_j, k - 1) - (alpha pi0)^2 / m``.
    """
    pi0 = _check_pi0(pi0)
    if pi0 == 0.0:
        return 0.0
    tv = linear(alpha, m).values
    g = MixtureCdf(pi0, F1)(tv)
    eng = _SuEngine(g[None, :], prec)
    k = np.arange(1, m + 1)
    s = float(np.sum(eng.kernel(1)[0, 1:] / k))
    return max(alpha * pi0 * s - (alpha * pi0) ** 2 / m, 0.0)


def expected_inverse_rejections_affine(m: int, beta: float, gamma: float) -> float:
    """``E[1 / (|SU(t)| + 1)]`` under ``m`` uniform p-values for ``t_k = beta + k gamma``."""
    if beta < 0 or gamma < 0 or beta + m * gamma > 1.0 + 1e-15:
        raise DomainError(f"need beta, gamma >= 0 and beta + m gamma <= 1, got beta={beta}, gamma={gamma}")
    d = gamma - beta
    if d == 0.0:
        return 1.0 - m * gamma
    # (1+d)^n - 1 through expm1/log1p keeps small d accurate
    pow_m1 = math.expm1((m + 1) * math.log1p(d))
    pow_m = math.expm1(m * math.log1p(d))
    return (pow_m1 / (m + 1) - gamma * pow_m) / d


def _geom(y: float, n: int) -> float:
    """``(1 - (1 - y)^n) / y`` with its limit ``n`` at ``y = 0``."""
    if y == 0.0:
        return float(n)
    if y == 1.0:
        return 1.0 if n > 0 else 0.0
    return -math.expm1(n * math.log1p(-y)) / y


_FAMILIES = ("F_all", "F_prime", "F_eps")


def var_extrema(m: int, alpha: float, pi0: float, family: str, which: str, eps: float | None = None) -> float:
    """Extreme linear step-up FDP variance over a class of alternatives.

    ``family`` is ``F_all`` (all continuous alternatives), ``F_prime``
    (``F1(x) >= x``) or ``F_eps`` (``F1 >= eps``, needs ``eps``). The minimum is
    the same for all three and is reached by Dirac-uniform alternatives.
    """
    pi0 = _check_pi0(pi0)
    if family not in _FAMILIES:
        raise DomainError(f"family must be one of {_FAMILIES}, got {family!r}")
    if which not in ("min", "max"):
        raise DomainError("which must be 'min' or 'max'")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if m < 2:
        raise DomainError("m must be >= 2")
    ap = alpha * pi0
    pi1 = 1.0 - pi0
    if which == "min":
        return ap / m * _geom(pi1, m) - ap * ap / m * (_geom(pi1, m - 1) + 1.0)
    if family == "F_all":
        return ap * (1.0 - ap)
    if family == "F_prime":
        return ap * (1.0 - alpha) + pi1 * pi0 * alpha**2 / m
    if eps is None or not 0.0 < eps <= 1.0:
        raise DomainError(f"F_eps needs eps in (0, 1], got {eps}")
    y = pi1 * eps
    return ap / m * _geom(y, m) - ap * ap / m * (_geom(y, m - 1) + 1.0)


def fnr_sd(t, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None) -> float:
    """False non-discovery rate of ``SD(t)``.

    ``m pi1 sum_{k<m} (1 - F1(t_{k+1})) / (m - k) D~_{m-1}((G(t_j))_j, k)``.
    """
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    if pi0 >= 1.0:
        raise DomainError("FNR is undefined when pi0 = 1 (no false nulls)")
    m = tv.size
    prec = resolve_precision(prec, m)
    g = MixtureCdf(pi0, F1)(tv)
    kern = _sd_kernel(g[: m - 1], prec)
    k = np.arange(m)
    return float(min(max(m * (1.0 - pi0) * np.sum((1.0 - F1(tv)) / (m - k) * kern), 0.0), 1.0))


def fnr_sd_by_duality(t, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None) -> float:
    """Step-down FNR through the step-up machinery.

    The hypotheses kept by ``SD(t)`` on ``p`` are those rejected by ``SU`` on
    ``1 - p`` with threshold ``1 - t_{m-r+1}``; false nulls play the role of
    nulls with c.d.f. ``1 - F1(1 - x)``, and true nulls become uniform
    alternatives.
    """
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    if pi0 >= 1.0:
        raise DomainError("FNR is undefined when pi0 = 1 (no false nulls)")
    tbar = 1.0 - tv[::-1]
    f0_dual = 1.0 - F1(tv)[::-1]
    return _general_su_fdr(tbar, f0_dual, tbar, 1.0 - pi0, prec)


def fnr_su(t, pi0: float, F1: AlternativeCdf, prec: PrecisionConfig | None = None) -> float:
    """False non-discovery rate of ``SU(t)``, as a step-down FDR on ``1 - p``.

    Non-rejections of ``SU(t)`` are the rejections of ``SD`` with threshold
    ``1 - t_{m-r+1}`` on ``1 - p``; the step-down FDR path handles the
    non-binomial conditional law.
    """
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    if pi0 >= 1.0:
        raise DomainError("FNR is undefined when pi0 = 1 (no false nulls)")
    prec = resolve_precision(prec, tv.size)
    tbar = 1.0 - tv[::-1]
    f0_dual = 1.0 - F1(tv)[::-1]
    g_dual = (1.0 - pi0) * f0_dual + pi0 * tbar
    return _general_sd_fdr(f0_dual, g_dual, 1.0 - pi0, prec)


@dataclass(frozen=True)
class LfcReport:
    """Comparison of FDRs under two alternatives ``F1 <= F1_prime``.

    ``predicted`` is ``"<="``, ``">="``, ``"=="`` or ``None`` when the
    theorem's hypothesis is not met (``assumption_met`` is then False and
    ``reason`` says why). ``ordering_holds`` compares the computed FDRs with
    the prediction up to ``1e-12``.
    """

    fdr_first: float
    fdr_second: float
    predicted: str | None
    assumption_met: bool
    ordering_holds: bool | None
    reason: str = ""


def lfc_fdr_compare(
    t, pi0: float, procedure: str, F1_pair, prec: PrecisionConfig | None = None, slack: float = 1e-12
) -> LfcReport:
    """Check the predicted FDR ordering between two pointwise-ordered alternatives.

    Step-up: the ordering follows the trend of ``t_k / k``. Step-down: needs
    the monotonicity condition of :func:`condition_a`, a concave first
    alternative and a Dirac-uniform second one.
    """
    th = t if isinstance(t, Threshold) else Threshold(t)
    F1, F1p = F1_pair
    grid = np.linspace(0.0, 1.0, 1001)[1:-1]
    if np.any(F1(grid) > F1p(grid) + 1e-15):
        raise DomainError("F1_pair must satisfy F1 <= F1' pointwise on (0, 1)")
    procedure = procedure.upper()
    if procedure == "SU":
        a, b = su_fdr(th, pi0, F1, prec), su_fdr(th, pi0, F1p, prec)
        trend = th.ratio_trend()
        pred = {"nondecreasing": "<=", "nonincreasing": ">=", "constant": "=="}.get(trend)
        if pred is None:
            return LfcReport(a, b, None, False, None, "t_k / k is not monotone")
    elif procedure == "SD":
        a, b = sd_fdr(th, pi0, F1, prec), sd_fdr(th, pi0, F1p, prec)
        reasons = []
        if not condition_a(th, prec).holds:
            reasons.append("condition on the threshold fails")
        if not F1.concave:
            reasons.append("F1 is not concave")
        if F1p.kind != "dirac_uniform":
            reasons.append("the comparison alternative is not Dirac-uniform")
        if reasons:
            return LfcReport(a, b, None, False, None, "; ".join(reasons))
        pred = "<="
    else:
        raise DomainError(f"procedure must be 'SU' or 'SD', got {procedure!r}")
    if pred == "<=":
        ok = a <= b + slack
    elif pred == ">=":
        ok = a >= b - slack
    else:
        ok = abs(a - b) <= max(slack, 1e-10)
    return LfcReport(a, b, pred, True, bool(ok))
