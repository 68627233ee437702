"""P-value models: alternative c.d.f.s, the mixture c.d.f. and EMN kernels.

The null c.d.f. is always the uniform one, ``F0(t) = t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .exceptions import DomainError

__all__ = [
    "gauss_tail",
    "gauss_tail_inv",
    "AlternativeCdf",
    "eval_F1",
    "parse_alternative",
    "MixtureCdf",
    "ModelSpec",
    "conditional_mixture",
    "emn_conditional_cdfs",
]


def gauss_tail(z):
    """Upper standard normal tail ``P(Z >= z)``.

    Accepts scalars or arrays; ``+inf`` maps to 0 and ``-inf`` to 1.
    """
    return ndtr(-np.asarray(z, dtype=float)) if np.ndim(z) else float(ndtr(-float(z)))


def _normal_pdf(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


def gauss_tail_inv(p):
    """Inverse of :func:`gauss_tail` on ``(0, 1)``.

    Starts from ``-ndtri(p)`` and applies one Newton step on the tail, which
    brings the relative error of the round trip down to rounding level.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError("gauss_tail_inv: p must lie strictly inside (0, 1)")
    z = -ndtri(arr)
    dens = _normal_pdf(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where(dens > 0, (ndtr(-z) - arr) / dens, 0.0)
    z = z + step
    return z if np.ndim(p) else float(z)


def _gauss_tail_inv_ext(t):
    """Like gauss_tail_inv but maps 0 to +inf and 1 to -inf."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    lo, hi = t <= 0.0, t >= 1.0
    mid = ~(lo | hi)
    out[lo], out[hi] = np.inf, -np.inf
    if mid.any():
        out[mid] = gauss_tail_inv(t[mid])
    return out


_KINDS = ("gaussian_shift", "dirac_uniform", "uniform", "constant", "zero", "tabulated")


@dataclass(frozen=True)
class AlternativeCdf:
    """The c.d.f. ``F1`` of p-values under the alternative.

    Build instances with the classmethods rather than the constructor.
    ``concave`` is a declaration; for tabulated c.d.f.s it is checked on the
    grid and a false claim raises.
    """

    kind: str
    mu: float = math.nan
    eps: float = math.nan
    grid_x: tuple = field(default=(), repr=False)
    grid_y: tuple = field(default=(), repr=False)
    concave: bool = True

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown alternative kind {self.kind!r}")

    @classmethod
    def gaussian_shift(cls, mu: float) -> "AlternativeCdf":
        """``F1(t) = gauss_tail(gauss_tail_inv(t) - mu)``; ``mu = inf`` gives Dirac-uniform."""
        mu = float(mu)
        if not mu > 0:
            raise DomainError(f"gaussian_shift needs mu > 0, got {mu}")
        if math.isinf(mu):
            return cls.dirac_uniform()
        return cls("gaussian_shift", mu=mu, concave=True)

    @classmethod
    def dirac_uniform(cls) -> "AlternativeCdf":
        return cls("dirac_uniform", concave=True)

    @classmethod
    def uniform(cls) -> "AlternativeCdf":
        return cls("uniform", concave=True)

    @classmethod
    def constant(cls, eps: float) -> "AlternativeCdf":
        """``F1 = eps`` on ``[0, 1)``: an atom of mass ``eps`` at 0, the rest at 1."""
        eps = float(eps)
        if not 0.0 < eps <= 1.0:
            raise DomainError(f"constant alternative needs eps in (0, 1], got {eps}")
        return cls("constant", eps=eps, concave=False)

    @classmethod
    def zero(cls) -> "AlternativeCdf":
        """``F1 = 0`` on ``(0, 1)`` with ``F1(1) = 1``."""
        return cls("zero", concave=False)

    @classmethod
    def tabulated(cls, x, y, concave: bool = False) -> "AlternativeCdf":
        """Piecewise-linear ``F1`` through ``(x_i, y_i)``.

        ``x`` must be strictly increasing from 0 to 1, ``y`` nondecreasing in
        [0, 1] with ``y[-1] = 1``.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise DomainError("tabulated F1 needs matching 1-d grids of length >= 2")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise DomainError("tabulated F1 grid must start at x=0 and end at x=1")
        if np.any(np.diff(x) <= 0):
            raise DomainError("tabulated F1 grid x must be strictly increasing")
        if np.any(np.diff(y) < 0) or y[0] < 0.0 or y[-1] != 1.0:
            raise DomainError("tabulated F1 values must be nondecreasing in [0, 1] and end at 1")
        if concave:
            slopes = np.diff(y) / np.diff(x)
            if np.any(np.diff(slopes) > 1e-12 * max(1.0, float(np.max(np.abs(slopes))))):
                raise DomainError("tabulated F1 declared concave but grid slopes increase")
        return cls("tabulated", grid_x=tuple(x), grid_y=tuple(y), concave=bool(concave))

    def __call__(self, t):
        """Evaluate ``F1`` at scalar or array ``t`` in [0, 1]."""
        arr = np.asarray(t, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise DomainError("F1 argument must lie in [0, 1]")
        out = self._eval(arr)
        return out if np.ndim(t) else float(out)

    def _eval(self, t: np.ndarray) -> np.ndarray:
        k = self.kind
        if k == "uniform":
            return t.copy()
        if k == "dirac_uniform":
            return np.ones_like(t)
        if k == "gaussian_shift":
            return gauss_tail(_gauss_tail_inv_ext(t) - self.mu)
        if k == "constant":
            # atoms at 0 (mass eps) and 1, right-continuous
            return np.where(t >= 1.0, 1.0, self.eps)
        if k == "zero":
            return np.where(t >= 1.0, 1.0, 0.0)
        return np.interp(t, self.grid_x, self.grid_y)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw p-values with c.d.f. ``F1``."""
        k = self.kind
        if k == "uniform":
            return rng.random(size)
        if k == "dirac_uniform":
            return np.zeros(size)
        if k == "gaussian_shift":
            return gauss_tail(rng.standard_normal(size) + self.mu)
        if k == "constant":
            # mass eps at 0 and 1 - eps at 1
            return np.where(rng.random(size) < self.eps, 0.0, 1.0)
        if k == "zero":
            return np.ones(size)
        u = rng.random(size)
        gy, gx = np.asarray(self.grid_y), np.asarray(self.grid_x)
        # generalized inverse of a piecewise-linear nondecreasing function
        idx = np.searchsorted(gy, u, side="left").clip(1, gy.size - 1)
        y0, y1 = gy[idx - 1], gy[idx]
        x0, x1 = gx[idx - 1], gx[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(y1 > y0, (u - y0) / (y1 - y0), 0.0)
        out = np.where(u <= gy[0], 0.0, x0 + frac * (x1 - x0))
        return out

    def label(self) -> str:
        if self.kind == "gaussian_shift":
            return f"gaussian:{self.mu:g}"
        if self.kind == "constant":
            return f"constant:{self.eps:g}"
        return self.kind


def parse_alternative(text: str) -> AlternativeCdf:
    """Parse ``gaussian:mu``, ``uniform``, ``dirac``, ``constant:eps``, ``zero`` or ``file:path``.

    A file holds two whitespace-separated columns ``x F1(x)``; a third token
    ``concave`` on the first line marks the table as concave.
    """
    name, _, rest = text.strip().partition(":")
    name = name.lower()
    try:
        if name in ("gaussian", "gaussian_shift"):
            return AlternativeCdf.gaussian_shift(float(rest))
        if name in ("dirac", "dirac_uniform") and not rest:
            return AlternativeCdf.dirac_uniform()
        if name == "uniform" and not rest:
            return AlternativeCdf.uniform()
        if name == "zero" and not rest:
            return AlternativeCdf.zero()
        if name == "constant":
            return AlternativeCdf.constant(float(rest))
    except ValueError as exc:
        raise DomainError(f"f1: bad parameter in {text!r}") from exc
    if name == "file":
        with open(rest) as fh:
            lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
        concave = bool(lines) and lines[0][-1].lower() == "concave"
        if concave:
            lines = lines[1:]
        arr = np.array([[float(a), float(b)] for a, b in lines])
        return AlternativeCdf.tabulated(arr[:, 0], arr[:, 1], concave=concave)
    raise DomainError(f"f1: cannot parse {text!r} (gaussian:mu, uniform, dirac, constant:eps, zero, file:path)")


def eval_F1(F1: AlternativeCdf, t):
    """Evaluate an alternative c.d.f.; see :meth:`AlternativeCdf.__call__`."""
    return F1(t)


@dataclass(frozen=True)
class MixtureCdf:
    """``G(t) = pi0 * t + (1 - pi0) * F1(t)``."""

    pi0: float
    F1: AlternativeCdf

    def __post_init__(self):
        if not 0.0 <= self.pi0 <= 1.0:
            raise DomainError(f"pi0 must lie in [0, 1], got {self.pi0}")

    @property
    def pi1(self) -> float:
        return 1.0 - self.pi0

    def __call__(self, t):
        arr = np.asarray(t, dtype=float)
        f1 = self.F1(arr) if self.pi0 < 1.0 else 0.0
        out = np.clip(self.pi0 * arr + self.pi1 * f1, 0.0, 1.0)
        return out if np.ndim(t) else float(out)


_MODEL_KINDS = ("indep_uncond", "indep_cond", "emn_uncond", "emn_cond")


@dataclass(frozen=True)
class ModelSpec:
    """One of the four p-value models.

    ``indep_*`` models carry ``F1``; ``emn_*`` models carry ``rho`` and ``mu``.
    ``*_uncond`` models carry ``pi0``; ``*_cond`` models carry the 0/1 vector
    ``H`` (1 marks a false null).
    """

    kind: str
    m: int
    pi0: float | None = None
    H: tuple | None = None
    F1: AlternativeCdf | None = None
    rho: float | None = None
    mu: float | None = None

    def __post_init__(self):
        if self.kind not in _MODEL_KINDS:
            raise DomainError(f"model kind must be one of {_MODEL_KINDS}, got {self.kind!r}")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m}")
        if self.kind.endswith("_uncond"):
            if self.pi0 is None or not 0.0 <= self.pi0 <= 1.0:
                raise DomainError(f"pi0 must lie in [0, 1], got {self.pi0}")
        else:
            if self.H is None or len(self.H) != self.m or any(h not in (0, 1) for h in self.H):
                raise DomainError("H must be a 0/1 vector of length m")
        if self.kind.startswith("indep"):
            if not isinstance(self.F1, AlternativeCdf):
                raise DomainError("independent models need an AlternativeCdf F1")
        else:
            if self.mu is None or not self.mu > 0:
                raise DomainError(f"mu must be > 0 (or inf), got {self.mu}")
            if self.rho is None:
                raise DomainError("EMN models need rho")
            lo = -1.0 if self.kind == "emn_cond" else 0.0
            if not lo <= self.rho <= 1.0:
                raise DomainError(f"rho must lie in [{lo:g}, 1] for {self.kind}, got {self.rho}")
            if self.rho < 0 and self.m != 2:
                raise DomainError("negative rho is only supported for m = 2")

    @property
    def alternative(self) -> AlternativeCdf:
        """Marginal alternative c.d.f. (Gaussian shift for EMN models)."""
        if self.F1 is not None:
            return self.F1
        return AlternativeCdf.gaussian_shift(self.mu)

    @property
    def m0(self) -> int | None:
        return None if self.H is None else self.m - int(sum(self.H))


def emn_conditional_cdfs(u, rho: float, mu: float, t):
    """Vectorized ``(F0(t | u, rho), F1(t | u, rho))``.

    ``u`` and ``t`` broadcast against each other. ``rho = 1`` gives the
    indicator forms.
    """
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    zt = _gauss_tail_inv_ext(t)
    if rho >= 1.0:
        f0 = (u <= t).astype(float)
        f1 = (u <= gauss_tail(zt - mu)).astype(float) if math.isfinite(mu) else np.ones(np.broadcast(u, t).shape)
        return np.broadcast_to(f0, np.broadcast(u, t).shape), f1
    zu = _gauss_tail_inv_ext(u)
    s, c = math.sqrt(rho), math.sqrt(1.0 - rho)
    with np.errstate(invalid="ignore"):
        base = zt - s * zu
        base = np.where(np.isnan(base), np.where(np.isinf(zt), zt, -zu), base)
    f0 = gauss_tail(base / c)
    if math.isinf(mu):
        f1 = np.where(t > 0, 1.0, 0.0) * np.ones_like(f0)
    else:
        f1 = gauss_tail((base - mu) / c)
    return f0, f1


def conditional_mixture(u: float, rho: float, mu: float, t: float, pi0: float = 0.5):
    """Conditional c.d.f.s of the unconditional EMN model given the common factor.

    Returns ``(F0(t | u), F1(t | u), G(t | u))`` with
    ``G = pi0 F0 + (1 - pi0) F1``.
    """
    if not 0.0 < u < 1.0:
        raise DomainError(f"u must lie in (0, 1), got {u}")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    if not 0.0 <= pi0 <= 1.0:
        raise DomainError(f"pi0 must lie in [0, 1], got {pi0}")
    f0, f1 = emn_conditional_cdfs(u, rho, mu, t)
    f0, f1 = float(f0), float(f1)
    return f0, f1, pi0 * f0 + (1.0 - pi0) * f1
