"""FDR, power and FDP law under the equicorrelated multivariate normal model.

For ``rho`` in [0, 1] the test statistics share a common factor. Given that
factor, the p-values are i.i.d. with c.d.f. ``pi0 F0(. | u) + pi1 F1(. | u)``,
so every independent-model formula applies pointwise and is then averaged
over the factor. Writing the factor as ``u = gauss_tail(v)`` turns that
average into a standard normal expectation in ``v``.

For ``m = 2`` the conditional model is handled for every ``rho`` in
[-1, 1] through explicit one-dimensional integrals and closed forms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .exceptions import AssumptionError, ConvergenceError, DomainError, UnsupportedCaseError
from .models import AlternativeCdf, gauss_tail, gauss_tail_inv
from .precision import PrecisionConfig, resolve_precision
from .stepdown import _sd_fdr_batch, _sd_power_batch
from .stepup import (
    _check_pi0,
    _su_fdp_cdf_arrays,
    _su_fdr_arrays,
    _su_moment_arrays,
    _su_power_arrays,
    _SuEngine,
    _values,
)
from .thresholds import linear

__all__ = [
    "QuadratureConfig",
    "integrate_normal",
    "emn_quantity",
    "emn_fdr_rho1",
    "m2_fdr",
    "m2_argmax_rho_su_m0_2",
    "M2Argmax",
    "FIGURE_PRESETS",
    "figure_data",
]

_METHODS = ("adaptive_gauss_legendre", "gauss_hermite")


@dataclass(frozen=True)
class QuadratureConfig:
    """How integrals over the common factor are computed.

    ``adaptive_gauss_legendre`` bisects panels of ``[-v_max, v_max]`` until
    the local error estimates add up to less than ``abs_tol``.
    ``gauss_hermite`` uses a fixed rule and reports the difference between
    ``n`` and ``2n`` nodes as its error.
    """

    method: str = "adaptive_gauss_legendre"
    abs_tol: float = 1e-8
    max_subdivisions: int = 2000
    v_max: float = 8.5
    hermite_nodes: int = 96

    def __post_init__(self):
        if self.method not in _METHODS:
            raise DomainError(f"quadrature method must be one of {_METHODS}, got {self.method!r}")
        if not self.abs_tol > 0:
            raise DomainError("abs_tol must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")


DEFAULT_QUAD = QuadratureConfig()

_GL_X, _GL_W = leggauss(15)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi(v):
    return np.exp(-0.5 * v * v) / _SQRT2PI


def _gl_panels(f, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """15-point Gauss-Legendre on each panel ``[a_i, b_i]``; ``f`` is evaluated once."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    vals = np.asarray(f(nodes), dtype=float).reshape(a.size, _GL_X.size)
    return half * (vals @ _GL_W)


def adaptive_gauss_legendre(f, a: float, b: float, abs_tol: float, max_subdivisions: int, breakpoints=()):
    """Integrate a vectorized ``f`` over ``[a, b]``.

    Returns ``(value, error_estimate)``. Each panel's estimate is the two-half
    rule; the difference from the whole-panel rule is its error. Panels are
    refined until the accepted error budget is spent proportionally to length.
    """
    pts = np.unique(np.clip(np.concatenate(([a, b], np.asarray(breakpoints, dtype=float))), a, b))
    pts = pts[np.isfinite(pts)]
    lo, hi = pts[:-1], pts[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return 0.0, 0.0
    total_len = b - a
    value, error, splits = 0.0, 0.0, 0
    while lo.size:
        mid = 0.5 * (lo + hi)
        whole = _gl_panels(f, lo, hi)
        halves = _gl_panels(f, np.concatenate((lo, mid)), np.concatenate((mid, hi)))
        fine = halves[: lo.size] + halves[lo.size :]
        err = np.abs(fine - whole)
        ok = err <= abs_tol * (hi - lo) / total_len
        value += float(fine[ok].sum())
        error += float(err[ok].sum())
        lo, hi = lo[~ok], hi[~ok]
        splits += lo.size
        if splits > max_subdivisions:
            rest = float(err[~ok].sum())
            raise ConvergenceError(
                f"adaptive quadrature exceeded {max_subdivisions} subdivisions "
                f"(error estimate {error + rest:.3g})",
                error + rest,
            )
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate((lo, mid)), np.concatenate((mid, hi))
    return value, error


def integrate_normal(f, quad: QuadratureConfig = DEFAULT_QUAD, breakpoints=()):
    """``E[f(V)]`` for ``V`` standard normal; returns ``(value, error_estimate)``."""
    if quad.method == "gauss_hermite":
        n = quad.hermite_nodes
        vals = []
        for nn in (n, 2 * n):
            x, w = hermegauss(nn)
            vals.append(float(np.dot(w, f(x))) / _SQRT2PI)
        err = abs(vals[1] - vals[0])
        if err > quad.abs_tol:
            raise ConvergenceError(f"Gauss-Hermite rules disagree by {err:.3g}", err)
        return vals[1], err
    L = quad.v_max
    return adaptive_gauss_legendre(
        lambda v: f(v) * _phi(v), -L, L, quad.abs_tol, quad.max_subdivisions, breakpoints
    )


# ---------------------------------------------------------------------------
# conditional c.d.f.s in v-space
# ---------------------------------------------------------------------------


def _z_of(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    lo, hi = t <= 0.0, t >= 1.0
    out[lo], out[hi] = np.inf, -np.inf
    mid = ~(lo | hi)
    if mid.any():
        out[mid] = gauss_tail_inv(t[mid])
    return out


def _conditional_cdfs_v(v: np.ndarray, rho: float, mu: float, zt: np.ndarray):
    """``F0(t_j | v)`` and ``F1(t_j | v)`` as (B, m) arrays for ``rho`` in [0, 1)."""
    s, c = math.sqrt(rho), math.sqrt(1.0 - rho)
    with np.errstate(invalid="ignore"):
        arg = (zt[None, :] - s * v[:, None]) / c
    f0 = gauss_tail(arg)
    if math.isinf(mu):
        f1 = np.where(np.isinf(zt) & (zt > 0), 0.0, 1.0)[None, :] * np.ones_like(f0)
    else:
        f1 = gauss_tail(arg - mu / c)
    return f0, f1


_KINDS = ("fdr", "power", "fdp_cdf", "moment")


def _batch_quantity(kind, procedure, f0, f1, pi0, prec, x, s):
    g = pi0 * f0 + (1.0 - pi0) * f1
    if procedure == "SU":
        eng = _SuEngine(g, prec)
        if kind == "fdr":
            return _su_fdr_arrays(eng, f0, pi0)
        if kind == "power":
            return _su_power_arrays(eng, f1)
        if kind == "fdp_cdf":
            return _su_fdp_cdf_arrays(eng, f0, pi0, x)
        return _su_moment_arrays(eng, f0, pi0, s)
    if kind == "fdr":
        return _sd_fdr_batch(f0, g, pi0)
    if kind == "power":
        return _sd_power_batch(f1, g)
    raise UnsupportedCaseError("the step-down FDP law is only available through its FDR and power")


def _check_procedure(procedure: str) -> str:
    p = str(procedure).upper()
    if p not in ("SU", "SD"):
        raise DomainError(f"procedure must be 'SU' or 'SD', got {procedure!r}")
    return p


def emn_quantity(
    kind: str,
    procedure: str,
    t,
    pi0: float,
    rho: float,
    mu: float,
    quad: QuadratureConfig | None = None,
    prec: PrecisionConfig | None = None,
    *,
    x: float | None = None,
    s: int | None = None,
    full_output: bool = False,
):
    """A quantity of ``SU(t)`` or ``SD(t)`` under the unconditional EMN model.

    Parameters
    ----------
    kind : {"fdr", "power", "fdp_cdf", "moment"}
        ``fdp_cdf`` needs ``x`` and ``moment`` needs ``s``; both are step-up only.
    rho : float in [0, 1]
        ``rho = 1`` is integrated exactly, piecewise in the common factor.
    full_output : bool
        Also return a dict with the quadrature error estimate.

    Raises
    ------
    ConvergenceError
        If the quadrature cannot meet ``quad.abs_tol``.
    """
    quad = quad or DEFAULT_QUAD
    procedure = _check_procedure(procedure)
    if kind not in _KINDS:
        raise DomainError(f"kind must be one of {_KINDS}, got {kind!r}")
    tv = _values(t)
    m = tv.size
    pi0 = _check_pi0(pi0)
    prec = resolve_precision(prec, m)
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1] for the unconditional EMN model, got {rho}")
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu}")
    if kind == "power" and pi0 >= 1.0:
        raise DomainError("power is undefined when pi0 = 1")
    if kind == "fdp_cdf" and (x is None or not 0.0 < x < 1.0):
        raise DomainError("fdp_cdf needs x in (0, 1)")
    if kind == "moment" and (s is None or int(s) != s or s < 1):
        raise DomainError("moment needs an integer order s >= 1")
    if procedure == "SD" and kind in ("fdp_cdf", "moment"):
        raise UnsupportedCaseError("the step-down FDP law is only available through its FDR and power")

    if rho >= 1.0:
        value, err = _rho1_exact(kind, procedure, tv, pi0, mu, prec, x, s), 0.0
    else:
        zt = _z_of(tv)

        def f(v):
            v = np.atleast_1d(v)
            f0, f1 = _conditional_cdfs_v(v, rho, mu, zt)
            return _batch_quantity(kind, procedure, f0, f1, pi0, prec, x, s)

        bps = ()
        if rho > 0.5 and quad.method != "gauss_hermite":
            # where the conditional null c.d.f. at t_1 and t_m switches
            sr = math.sqrt(rho)
            bps = [z / sr for z in (zt[0], zt[-1]) if math.isfinite(z)]
        value, err = integrate_normal(f, quad, bps)
    value = min(max(value, 0.0), 1.0)
    if full_output:
        return value, {"quadrature_error": err, "method": "exact-piecewise" if rho >= 1 else quad.method}
    return value


def _rho1_exact(kind, procedure, tv, pi0, mu, prec, x, s) -> float:
    """Exact average over u when every null statistic equals the common factor."""
    f1t = AlternativeCdf.gaussian_shift(mu)(tv)
    cuts = np.unique(np.concatenate(([0.0, 1.0], tv, f1t)))
    lo, hi = cuts[:-1], cuts[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    u = 0.5 * (lo + hi)
    # on (lo, hi) the indicators u <= t_j are constant, so the midpoint is exact
    f0 = (u[:, None] <= tv[None, :]).astype(float)
    f1 = (u[:, None] <= f1t[None, :]).astype(float)
    vals = _batch_quantity(kind, procedure, f0, f1, pi0, prec, x, s)
    return float(np.dot(hi - lo, vals))


def emn_fdr_rho1(procedure: str, t, pi0: float, mu: float) -> float:
    """Closed-form FDR of the unconditional EMN model at ``rho = 1``.

    Step-up: ``pi0 t_m``. Step-down:
    ``sum_k C(m, k) pi0^k pi1^(m-k) (k / m) min(t_{m-k+1}, gauss_tail(gauss_tail_inv(t_1) - mu))``.
    """
    procedure = _check_procedure(procedure)
    tv = _values(t)
    pi0 = _check_pi0(pi0)
    m = tv.size
    if procedure == "SU":
        return float(pi0 * tv[-1])
    cap = AlternativeCdf.gaussian_shift(mu)(tv[0])
    pi1 = 1.0 - pi0
    total = 0.0
    for k in range(1, m + 1):
        total += math.comb(m, k) * pi0**k * pi1 ** (m - k) * (k / m) * min(tv[m - k], cap)
    return float(total)


# ---------------------------------------------------------------------------
# m = 2, conditional model, rho in [-1, 1]
# ---------------------------------------------------------------------------

M2_QUAD = QuadratureConfig(abs_tol=1e-13, max_subdivisions=20000, v_max=9.0)


def _v_integral(z: float, a: float, b: float, rho: float, quad: QuadratureConfig) -> float:
    """``int_a^b phi(v) gauss_tail((z - rho v) / sqrt(1 - rho^2)) dv``."""
    L = quad.v_max
    a, b = max(a, -L), min(b, L)
    if not b > a:
        return 0.0
    sd = math.sqrt(max(1.0 - rho * rho, 0.0))

    def f(v):
        return _phi(v) * gauss_tail((z - rho * v) / sd)

    bps = [z / rho] if rho != 0.0 and math.isfinite(z) else []
    val, _ = adaptive_gauss_legendre(f, a, b, quad.abs_tol, quad.max_subdivisions, bps)
    return val


def m2_fdr(procedure: str, t, m0: int, rho: float, mu: float, quad: QuadratureConfig | None = None) -> float:
    """FDR of ``SU(t)`` or ``SD(t)`` for two hypotheses under the conditional EMN model.

    ``t = (t_1, t_2)``, ``m0`` in {1, 2} true nulls and ``rho`` in [-1, 1].
    """
    procedure = _check_procedure(procedure)
    quad = quad or M2_QUAD
    tv = _values(t)
    if tv.size != 2:
        raise DomainError("m2_fdr needs a threshold of length 2")
    if m0 not in (1, 2):
        raise DomainError(f"m0 must be 1 or 2, got {m0}")
    if not -1.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [-1, 1], got {rho}")
    if m0 == 1 and not mu > 0:
        raise DomainError(f"mu must be positive, got {mu}")
    t1, t2 = float(tv[0]), float(tv[1])
    if not (0.0 < t1 and t2 < 1.0):
        raise DomainError("m2_fdr needs 0 < t_1 <= t_2 < 1")
    z1, z2 = gauss_tail_inv(t2), gauss_tail_inv(t1)
    if procedure == "SU":
        return _m2_su(t1, t2, z1, z2, m0, rho, mu, quad)
    return _m2_sd(t1, t2, z1, z2, m0, rho, mu, quad)


def _m2_su(t1, t2, z1, z2, m0, rho, mu, quad):
    if rho == 1.0:
        return t2 / 2.0 if m0 == 1 else t2
    if rho == -1.0:
        if m0 == 1:
            if mu <= 2.0 * z1:
                return t1
            if mu < z1 + z2:
                return t1 + 0.5 * t2 - 0.5 * gauss_tail(mu - z1)
            return 0.5 * t2 + 0.5 * gauss_tail(mu - z1)
        if t2 <= 0.5:
            return 2.0 * t1
        if t1 + t2 <= 1.0:
            return 2.0 * (t1 + t2) - 1.0
        return 1.0
    inf = math.inf
    if m0 == 1:
        return 0.5 * _v_integral(z1, z1 - mu, inf, rho, quad) + _v_integral(z2, -inf, z1 - mu, rho, quad)
    return t1 + _v_integral(z1, z1, z2, rho, quad) + _v_integral(z2, -inf, z1, rho, quad)


def _m2_sd(t1, t2, z1, z2, m0, rho, mu, quad):
    if rho == 1.0:
        if m0 == 1:
            return 0.5 * min(t2, gauss_tail(z2 - mu))
        return t1
    if rho == -1.0:
        if m0 == 1:
            if mu <= z1 + z2:
                return t1
            if mu < 2.0 * z2:
                return 0.5 * (t1 + t2) - 0.5 * gauss_tail(mu - z2) + 0.5 * gauss_tail(mu - z1)
            return 0.5 * t2 + 0.5 * gauss_tail(mu - z1)
        return min(2.0 * t1, 1.0)
    inf = math.inf
    if m0 == 1:
        return (
            0.5 * _v_integral(z1, z2 - mu, inf, rho, quad)
            + 0.5 * _v_integral(z2, z1 - mu, z2 - mu, rho, quad)
            + _v_integral(z2, -inf, z1 - mu, rho, quad)
        )
    return t1 + _v_integral(z2, -inf, z2, rho, quad)


@dataclass(frozen=True)
class M2Argmax:
    """Maximizer over ``rho`` of the two-null step-up FDR for ``m = 2``.

    ``rho`` is the closed-form root; ``rho_numeric`` comes from a
    golden-section search on :func:`m2_fdr`; ``rho_as_printed`` evaluates the
    variant of the closed form whose constant term is ``4 log 2`` instead of
    ``4 (log 2)^2``.
    """

    rho: float
    rho_numeric: float
    fdr_max: float
    rho_as_printed: float
    confirmed: bool


def _rho_star(z1: float, z2: float, const: float) -> float:
    l2 = math.log(2.0)
    disc = (z1 * z1 - z1 * z2) ** 2 + 2.0 * l2 * (z1 * z1 - z2 * z2) + const
    return (-z1 * (z1 - z2) - math.sqrt(max(disc, 0.0))) / (2.0 * l2)


def _golden_max(f, a: float, b: float, tol: float = 1e-9) -> float:
    r = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def m2_argmax_rho_su_m0_2(t, alpha_check: bool = True, tol: float = 1e-4) -> M2Argmax:
    """Correlation maximizing ``m2_fdr("SU", t, m0=2, rho, .)``.

    The FDR equals ``1 - 2 Phi2(z1, z2; rho) + Phi2(z1, z1; rho)``; setting
    its derivative in ``rho`` to zero gives a quadratic whose negative root is
    returned. The root is confirmed by a golden-section search.

    Raises
    ------
    AssumptionError
        If ``alpha_check`` and ``t_2 > 1/2``.
    """
    tv = _values(t)
    if tv.size != 2:
        raise DomainError("need a threshold of length 2")
    t1, t2 = float(tv[0]), float(tv[1])
    if alpha_check and t2 > 0.5:
        raise AssumptionError(f"the closed-form maximizer assumes t_2 <= 1/2, got {t2}")
    z1, z2 = gauss_tail_inv(t2), gauss_tail_inv(t1)
    l2 = math.log(2.0)
    rho = _rho_star(z1, z2, 4.0 * l2 * l2)
    printed = _rho_star(z1, z2, 4.0 * l2)

    def fdr(r):
        return m2_fdr("SU", (t1, t2), 2, r, 1.0)

    rho_num = _golden_max(fdr, -1.0 + 1e-9, 0.0)
    confirmed = abs(rho_num - rho) <= tol
    if not confirmed:
        warnings.warn(
            f"closed-form maximizer {rho:.6f} differs from the numerical one {rho_num:.6f}", UserWarning, stacklevel=2
        )
    return M2Argmax(rho, rho_num, fdr(rho), printed, confirmed)


# ---------------------------------------------------------------------------
# figure presets
# ---------------------------------------------------------------------------

_MU_GRID = tuple(round(0.25 * i, 2) for i in range(1, 41))

FIGURE_PRESETS = {
    "fig1-left": {
        "description": "FDR(LSU) against mu, unconditional EMN model, m=100, pi0=0.5, alpha=0.05",
        "m": 100,
        "pi0": 0.5,
        "alpha": 0.05,
        "rho": (0.0, 0.2, 0.5, 0.8),
        "mu": _MU_GRID,
    },
    "fig1-right": {
        "description": "FDR(LSU) against mu, conditional EMN model, m=2, m0=1, rho<0, alpha=0.05",
        "m": 2,
        "m0": 1,
        "alpha": 0.05,
        "rho": (-0.2, -0.5, -0.8, -1.0),
        "mu": _MU_GRID,
    },
    "fig2-grid": {
        "description": "FDR against rho, conditional EMN model, m=2, alpha=0.2; panels SU/SD x m0=1/2",
        "m": 2,
        "alpha": 0.2,
        "rho": tuple(round(-1.0 + 0.02 * i, 2) for i in range(101)),
        "mu": (1.0, 2.0, 3.0, 4.0),
    },
}


def figure_data(preset: str, quad: QuadratureConfig | None = None, prec: PrecisionConfig | None = None):
    """Rows of curve data for a named preset.

    Returns ``(columns, rows)``; every row is a tuple matching ``columns``.
    """
    if preset not in FIGURE_PRESETS:
        raise DomainError(f"unknown figure preset {preset!r} (known: {', '.join(FIGURE_PRESETS)})")
    cfg = FIGURE_PRESETS[preset]
    rows = []
    if preset == "fig1-left":
        t = linear(cfg["alpha"], cfg["m"])
        for rho in cfg["rho"]:
            for mu in cfg["mu"]:
                v, info = emn_quantity("fdr", "SU", t, cfg["pi0"], rho, mu, quad, prec, full_output=True)
                rows.append((rho, mu, v, info["quadrature_error"]))
        return ("rho", "mu", "fdr", "error_estimate"), rows
    if preset == "fig1-right":
        t = linear(cfg["alpha"], 2)
        for rho in cfg["rho"]:
            for mu in cfg["mu"]:
                rows.append((rho, mu, m2_fdr("SU", t, cfg["m0"], rho, mu)))
        return ("rho", "mu", "fdr"), rows
    t = linear(cfg["alpha"], 2)
    for proc in ("SU", "SD"):
        for m0 in (1, 2):
            mus = cfg["mu"] if m0 == 1 else (math.nan,)
            for mu in mus:
                for rho in cfg["rho"]:
                    rows.append((proc, m0, mu, rho, m2_fdr(proc, t, m0, rho, 1.0 if m0 == 2 else mu)))
    return ("procedure", "m0", "mu", "rho", "fdr"), rows
