"""Critical-value sequences for step-up and step-down procedures."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DomainError

__all__ = [
    "Threshold",
    "linear",
    "gavrilov",
    "finner2009",
    "bky_style",
    "power_law",
    "piecewise_linear",
    "affine",
    "constant",
    "from_file",
    "parse",
]


@dataclass(frozen=True)
class Threshold:
    """A nondecreasing sequence ``t_1 <= ... <= t_m`` in [0, 1].

    ``kind`` and ``params`` record how the sequence was built; they do not
    affect any computation.
    """

    values: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size == 0:
            raise DomainError("a threshold needs at least one value")
        if np.any(~np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise DomainError("threshold values must lie in [0, 1]")
        if np.any(np.diff(v) < 0.0):
            i = int(np.argmax(np.diff(v) < 0.0))
            raise DomainError(f"threshold must be nondecreasing (t_{i + 1} > t_{i + 2})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __getitem__(self, i):
        return self.values[i]

    def ratio_trend(self, slack: float = 1e-14) -> str:
        """Classify ``t_k / k`` as ``"nondecreasing"``, ``"nonincreasing"``, ``"constant"`` or ``"neither"``."""
        r = self.values / np.arange(1, self.m + 1)
        d = np.diff(r)
        up = bool(np.all(d >= -slack))
        down = bool(np.all(d <= slack))
        if up and down:
            return "constant"
        if up:
            return "nondecreasing"
        if down:
            return "nonincreasing"
        return "neither"

    def label(self) -> str:
        if not self.params:
            return self.kind
        return self.kind + ":" + ",".join(f"{v:g}" for v in self.params.values())


def _check_level(alpha: float, name: str = "alpha") -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"{name} must lie in (0, 1], got {alpha}")
    return alpha


def _ks(m: int) -> np.ndarray:
    if int(m) != m or m < 1:
        raise DomainError(f"m must be a positive integer, got {m}")
    return np.arange(1, int(m) + 1, dtype=float)


def linear(alpha: float, m: int) -> Threshold:
    """``t_k = alpha k / m``."""
    alpha = _check_level(alpha)
    return Threshold(alpha * _ks(m) / m, "linear", {"alpha": alpha})


def gavrilov(alpha: float, m: int) -> Threshold:
    """``t_k = alpha k / (m + 1 - (1 - alpha) k)``."""
    alpha = _check_level(alpha)
    k = _ks(m)
    return Threshold(alpha * k / (m + 1.0 - (1.0 - alpha) * k), "gavrilov", {"alpha": alpha})


def finner2009(alpha: float, m: int) -> Threshold:
    """``t_k = alpha k / (m - (1 - alpha) k)``."""
    alpha = _check_level(alpha)
    k = _ks(m)
    return Threshold(np.minimum(alpha * k / (m - (1.0 - alpha) * k), 1.0), "finner2009", {"alpha": alpha})


def bky_style(alpha: float, m: int) -> Threshold:
    """``t_k = alpha min{1, (1 - alpha) k / (m - k + 1)}``."""
    alpha = _check_level(alpha)
    k = _ks(m)
    return Threshold(alpha * np.minimum(1.0, (1.0 - alpha) * k / (m - k + 1.0)), "bky_style", {"alpha": alpha})


def power_law(scale: float, exponent: float, m: int) -> Threshold:
    """``t_k = scale (k / m)^exponent``."""
    return Threshold(scale * (_ks(m) / m) ** exponent, "power_law", {"scale": scale, "exponent": exponent})


def piecewise_linear(alpha: float, p: float, a: int, m: int) -> Threshold:
    """Slope ``alpha p / m`` up to index ``a``, then the line joining ``(a, alpha p a / m)`` to ``(m, alpha)``."""
    alpha = _check_level(alpha)
    k = _ks(m)
    if not 1 <= a < m:
        raise DomainError(f"piecewise_linear needs 1 <= a < m, got a={a}, m={m}")
    r = (p * a - m) / (a - m)
    tail = alpha * r * k / m + alpha * (1.0 - r)
    vals = np.where(k <= a, alpha * p * k / m, tail)
    return Threshold(vals, "piecewise_linear", {"alpha": alpha, "p": p, "a": a})


def affine(beta: float, gamma: float, m: int) -> Threshold:
    """``t_k = beta + k gamma``."""
    return Threshold(beta + gamma * _ks(m), "affine", {"beta": beta, "gamma": gamma})


def constant(c: float, m: int) -> Threshold:
    return Threshold(np.full(int(m), float(c)), "constant", {"c": c})


def from_file(path, m: int | None = None) -> Threshold:
    """Read one ``t_k`` per line; blank lines and ``#`` comments are skipped."""
    vals = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            vals.append(float(line))
    if m is not None and len(vals) != m:
        raise DomainError(f"threshold file {path} has {len(vals)} values, expected m={m}")
    return Threshold(np.array(vals), "file", {})


_PARSERS = {
    "linear": (linear, 1),
    "gavrilov": (gavrilov, 1),
    "finner2009": (finner2009, 1),
    "bky": (bky_style, 1),
    "bky_style": (bky_style, 1),
    "power": (power_law, 2),
    "piecewise": (piecewise_linear, 3),
    "affine": (affine, 2),
    "constant": (constant, 1),
}


def parse(text: str, m: int) -> Threshold:
    """Parse ``name:params`` such as ``linear:0.05``, ``power:0.9,0.9``, ``piecewise:0.5,0.6,4`` or ``file:path``."""
    name, _, rest = text.strip().partition(":")
    name = name.lower()
    if name == "file":
        return from_file(rest, m)
    if name not in _PARSERS:
        raise DomainError(f"threshold: unknown family {name!r} (known: {', '.join(sorted(_PARSERS))}, file)")
    fn, nargs = _PARSERS[name]
    try:
        args = [float(x) for x in rest.split(",")] if rest else []
    except ValueError as exc:
        raise DomainError(f"threshold: bad parameters in {text!r}") from exc
    if len(args) != nargs:
        raise DomainError(f"threshold: {name} takes {nargs} parameter(s), got {len(args)}")
    if name == "piecewise":
        args[2] = int(args[2])
    return fn(*args, m)
