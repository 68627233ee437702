"""Monte Carlo simulator for the four p-value models and both procedures.

Random numbers come from numpy's PCG64. The seed is expanded with
``SeedSequence(seed).spawn(batches)`` so each batch owns an independent
stream; results depend only on ``(seed, replications, batches)`` and not on
the number of worker threads. Standard errors are batch means over 100
batches.

Rejections are computed in a "p-like" space: a score ``q`` and nondecreasing
cut-offs ``c`` such that ``p_i <= t_k`` iff ``q_i <= c_k``. For independent
models ``q = p`` and ``c = t``; for EMN models ``q = -X`` with ``X`` the
Gaussian test statistic and ``c_k = Phi^{-1}(t_k)``, which avoids evaluating
the normal tail on every draw.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .exceptions import DomainError
from .models import ModelSpec
from .thresholds import Threshold

__all__ = [
    "SimConfig",
    "SimResult",
    "simulate",
    "simulate_mu_sweep",
    "sort_and_cutoff",
    "rejection_counts",
    "lemma_stepup_holds",
    "lemma_stepdown_holds",
]

STATISTICS = ("fdr", "fnr", "power", "fdp_cdf", "fdp_moment", "fdp_variance", "rejection_pmf", "conditional_false_pmf")
_CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class SimConfig:
    """What to simulate.

    ``fdp_x`` lists the points at which ``P(FDP <= x)`` is estimated when
    ``"fdp_cdf"`` is requested, and ``moments`` the orders ``s`` of
    ``E[FDP^s]`` for ``"fdp_moment"``. Conditional false-count frequencies are only
    reported for rejection counts observed at least ``min_stratum`` times.
    """

    model: ModelSpec
    threshold: Threshold
    procedure: str
    replications: int
    seed: int
    statistics: tuple = ("fdr",)
    fdp_x: tuple = ()
    moments: tuple = ()
    batches: int = 100
    min_stratum: int = 1000
    workers: int = 1

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 1:
            raise DomainError(f"replications must be a positive integer, got {self.replications}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.procedure.upper() not in ("SU", "SD"):
            raise DomainError(f"procedure must be 'SU' or 'SD', got {self.procedure!r}")
        object.__setattr__(self, "procedure", self.procedure.upper())
        if self.threshold.m != self.model.m:
            raise DomainError(f"threshold has {self.threshold.m} entries but the model has m={self.model.m}")
        bad = [s for s in self.statistics if s not in STATISTICS]
        if bad:
            raise DomainError(f"unknown statistics {bad}; choose from {STATISTICS}")
        if "fdp_cdf" in self.statistics and not self.fdp_x:
            raise DomainError("fdp_cdf needs at least one point in fdp_x")
        if "fdp_moment" in self.statistics and not self.moments:
            raise DomainError("fdp_moment needs at least one order in moments")
        if any(int(s) != s or s < 1 for s in self.moments):
            raise DomainError("moment orders must be positive integers")
        if any(not 0.0 <= x <= 1.0 for x in self.fdp_x):
            raise DomainError("fdp_x points must lie in [0, 1]")
        if self.batches < 1 or self.workers < 1:
            raise DomainError("batches and workers must be positive")


@dataclass
class SimResult:
    replications: int
    estimates: dict = field(default_factory=dict)
    std_errors: dict = field(default_factory=dict)
    rejection_pmf: np.ndarray | None = None
    rejection_pmf_se: np.ndarray | None = None
    conditional_false_pmf: dict = field(default_factory=dict)

    def within(self, name: str, exact: float, n_se: float = 4.0) -> bool:
        """True when ``|estimate - exact| <= n_se * se`` (exact match if the SE is zero)."""
        est, se = self.estimates[name], self.std_errors[name]
        return abs(est - exact) <= n_se * se + 1e-15


def _cutoffs(model: ModelSpec, t: np.ndarray) -> np.ndarray:
    if model.kind.startswith("emn"):
        with np.errstate(divide="ignore"):
            return ndtri(t)
    return t


def _draw(rng: np.random.Generator, n: int, model: ModelSpec):
    """Scores ``q`` (n, m) and the false-null indicator ``H`` (n, m)."""
    m = model.m
    if model.H is not None:
        H = np.broadcast_to(np.asarray(model.H, dtype=bool), (n, m))
    else:
        H = rng.random((n, m)) < 1.0 - model.pi0
    if model.kind.startswith("indep"):
        p = rng.random((n, m))
        alt = model.F1.sample(rng, (n, m))
        return np.where(H, alt, p), H
    return -_emn_statistic(rng, n, model, H, model.mu), H


def _emn_noise(rng: np.random.Generator, n: int, model: ModelSpec) -> np.ndarray:
    m, rho = model.m, model.rho
    z = rng.standard_normal((n, m))
    if rho < 0:
        # m = 2 only: correlate the pair directly
        z[:, 1] = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
        return z
    z0 = rng.standard_normal((n, 1))
    return math.sqrt(rho) * z0 + math.sqrt(1.0 - rho) * z


def _emn_statistic(rng, n, model, H, mu):
    x = _emn_noise(rng, n, model)
    if math.isinf(mu):
        return np.where(H, np.inf, x)
    return x + mu * H


def rejection_counts(q: np.ndarray, cut: np.ndarray, procedure: str):
    """Row-wise rejection count and rejection mask.

    ``q`` is (n, m), ``cut`` nondecreasing of length m; ``p_(k) <= t_k`` reads
    ``q_(k) <= cut_k``.
    """
    n, m = q.shape
    ok = np.sort(q, axis=1) <= cut
    if procedure == "SU":
        last = np.argmax(ok[:, ::-1], axis=1)
        k = np.where(ok.any(axis=1), m - last, 0)
    else:
        bad = ~ok
        k = np.where(bad.any(axis=1), np.argmax(bad, axis=1), m)
    level = np.where(k > 0, cut[np.maximum(k - 1, 0)], -np.inf)
    rejected = (q <= level[:, None]) & (k > 0)[:, None]
    return k, rejected


class _Acc:
    """Per-batch sums; merged in batch order."""

    def __init__(self, m: int, nx: int):
        self.n = 0
        self.fdp = 0.0
        self.fnp = 0.0
        self.pow = 0.0
        self.cdf = np.zeros(nx)
        self.rej = np.zeros(m + 1, dtype=np.int64)
        self.joint = np.zeros((m + 1, m + 1), dtype=np.int64)

    def add(self, k, rejected, H, xs, pow_norm):
        m = H.shape[1]
        V = np.sum(rejected & ~H, axis=1)
        S = k - V
        m1 = np.sum(H, axis=1)
        fdp = V / np.maximum(k, 1)
        self.n += k.size
        self.fdp += float(fdp.sum())
        self.fnp += float(((m1 - S) / np.maximum(m - k, 1)).sum())
        if pow_norm > 0:
            self.pow += float(S.sum()) / pow_norm
        if xs.size:
            self.cdf += (fdp[:, None] <= xs + 1e-12).sum(axis=0)
        self.rej += np.bincount(k, minlength=m + 1)
        self.joint += np.bincount(k * (m + 1) + V, minlength=(m + 1) ** 2).reshape(m + 1, m + 1)


def _batch_sizes(total: int, batches: int) -> list[int]:
    b = min(batches, total)
    base, extra = divmod(total, b)
    return [base + (i < extra) for i in range(b)]


def _run_batch(args):
    cfg, seq, size = args
    model = cfg.model
    m = model.m
    cut = _cutoffs(model, cfg.threshold.values)
    xs = np.asarray(cfg.fdp_x, dtype=float)
    pow_norm = _power_norm(model)
    rng = np.random.Generator(np.random.PCG64(seq))
    acc = _Acc(m, xs.size)
    rows = max(1, _CHUNK_CELLS // m)
    done = 0
    while done < size:
        n = min(rows, size - done)
        q, H = _draw(rng, n, model)
        k, rejected = rejection_counts(q, cut, cfg.procedure)
        acc.add(k, rejected, H, xs, pow_norm)
        done += n
    return acc


def _power_norm(model: ModelSpec) -> float:
    if model.H is not None:
        return float(sum(model.H))
    return (1.0 - model.pi0) * model.m


def _mean_se(values: np.ndarray, weights: np.ndarray):
    mean = float(np.sum(values * weights) / weights.sum())
    if values.size < 2:
        return mean, float("nan")
    # batch means: sd of batch averages over sqrt(#batches)
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def simulate(cfg: SimConfig) -> SimResult:
    """Monte Carlo estimates with batch-means standard errors.

    FDP is 0 when nothing is rejected and the non-discovery proportion is 0
    when everything is.
    """
    sizes = _batch_sizes(cfg.replications, cfg.batches)
    seqs = np.random.SeedSequence(int(cfg.seed)).spawn(len(sizes))
    jobs = [(cfg, s, n) for s, n in zip(seqs, sizes)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            accs = list(ex.map(_run_batch, jobs))
    else:
        accs = [_run_batch(j) for j in jobs]

    w = np.array([a.n for a in accs], dtype=float)
    res = SimResult(cfg.replications)
    stats = set(cfg.statistics)
    model = cfg.model
    if "fdr" in stats:
        res.estimates["fdr"], res.std_errors["fdr"] = _mean_se(np.array([a.fdp / a.n for a in accs]), w)
    if "fnr" in stats:
        res.estimates["fnr"], res.std_errors["fnr"] = _mean_se(np.array([a.fnp / a.n for a in accs]), w)
    if "power" in stats:
        if _power_norm(model) == 0:
            raise DomainError("power is undefined without false nulls")
        res.estimates["power"], res.std_errors["power"] = _mean_se(np.array([a.pow / a.n for a in accs]), w)
    if "fdp_cdf" in stats:
        per = np.array([a.cdf / a.n for a in accs])
        for i, x in enumerate(cfg.fdp_x):
            key = f"fdp_cdf({x:g})"
            res.estimates[key], res.std_errors[key] = _mean_se(per[:, i], w)
    if "fdp_moment" in stats or "fdp_variance" in stats:
        ks = np.arange(model.m + 1)
        ratio = ks[None, :] / np.maximum(ks[:, None], 1)  # ratio[k, v] = v / (k or 1)
        per_joint = [a.joint / a.n for a in accs]
        for s in cfg.moments:
            key = f"fdp_moment({int(s)})"
            vals = np.array([float(np.sum(j * ratio ** int(s))) for j in per_joint])
            res.estimates[key], res.std_errors[key] = _mean_se(vals, w)
        if "fdp_variance" in stats:
            tot = sum(a.joint for a in accs) / w.sum()
            m1, m2 = float(np.sum(tot * ratio)), float(np.sum(tot * ratio**2))
            vals = np.array([float(np.sum(j * ratio**2) - np.sum(j * ratio) ** 2) for j in per_joint])
            res.estimates["fdp_variance"] = m2 - m1 * m1
            res.std_errors["fdp_variance"] = float(np.std(vals, ddof=1) / math.sqrt(len(accs))) if len(accs) > 1 else float("nan")
    if "rejection_pmf" in stats or "conditional_false_pmf" in stats:
        per = np.array([a.rej / a.n for a in accs])
        res.rejection_pmf = per.T @ w / w.sum()
        res.rejection_pmf_se = (
            per.std(axis=0, ddof=1) / math.sqrt(len(accs)) if len(accs) > 1 else np.full(model.m + 1, np.nan)
        )
    if "conditional_false_pmf" in stats:
        rej = sum(a.rej for a in accs)
        joint = sum(a.joint for a in accs)
        for k in range(1, model.m + 1):
            nk = int(rej[k])
            if nk < cfg.min_stratum:
                continue
            probs = joint[k, : k + 1] / nk
            res.conditional_false_pmf[k] = (probs, np.sqrt(probs * (1.0 - probs) / nk), nk)
    return res


def simulate_mu_sweep(
    model: ModelSpec,
    threshold: Threshold,
    procedure: str,
    mus,
    replications: int,
    seed: int,
    batches: int = 100,
):
    """FDR estimates for an EMN model across several shifts, sharing random numbers.

    Returns ``(estimates, std_errors)`` arrays aligned with ``mus``.
    """
    if not model.kind.startswith("emn"):
        raise DomainError("the shift sweep is only defined for EMN models")
    procedure = procedure.upper()
    mus = np.asarray(mus, dtype=float)
    cut = ndtri(threshold.values)
    m = model.m
    sizes = _batch_sizes(replications, batches)
    seqs = np.random.SeedSequence(int(seed)).spawn(len(sizes))
    per = np.zeros((len(sizes), mus.size))
    for b, (seq, size) in enumerate(zip(seqs, sizes)):
        rng = np.random.Generator(np.random.PCG64(seq))
        rows = max(1, _CHUNK_CELLS // m)
        done = 0
        while done < size:
            n = min(rows, size - done)
            if model.H is not None:
                H = np.broadcast_to(np.asarray(model.H, dtype=bool), (n, m))
            else:
                H = rng.random((n, m)) < 1.0 - model.pi0
            x = _emn_noise(rng, n, model)
            for i, mu in enumerate(mus):
                q = -np.where(H, np.inf, x) if math.isinf(mu) else -(x + mu * H)
                k, rejected = rejection_counts(q, cut, procedure)
                V = np.sum(rejected & ~H, axis=1)
                per[b, i] += float((V / np.maximum(k, 1)).sum())
            done += n
        per[b] /= size
    w = np.asarray(sizes, dtype=float)
    est = per.T @ w / w.sum()
    se = per.std(axis=0, ddof=1) / math.sqrt(len(sizes)) if len(sizes) > 1 else np.full(mus.size, np.nan)
    return est, se


def sort_and_cutoff(p, t, procedure: str) -> np.ndarray:
    """Indices (0-based) rejected by ``SU(t)`` or ``SD(t)`` on one p-value vector."""
    p = np.asarray(p, dtype=float)
    t = np.asarray(t.values if isinstance(t, Threshold) else t, dtype=float)
    if p.shape != t.shape or p.ndim != 1:
        raise DomainError("p and t must be 1-d of equal length")
    if np.any((p < 0) | (p > 1)):
        raise DomainError("p-values must lie in [0, 1]")
    ps = np.sort(p)
    hit = ps <= t
    if procedure.upper() == "SU":
        idx = np.nonzero(hit)[0]
        k = int(idx[-1]) + 1 if idx.size else 0
    elif procedure.upper() == "SD":
        miss = np.nonzero(~hit)[0]
        k = int(miss[0]) if miss.size else p.size
    else:
        raise DomainError(f"procedure must be 'SU' or 'SD', got {procedure!r}")
    if k == 0:
        return np.array([], dtype=int)
    return np.nonzero(p <= t[k - 1])[0]


def lemma_stepup_holds(p, t, ell: int) -> bool:
    """All of the first ``ell`` hypotheses rejected iff ``k = k'_ell + ell``.

    ``k'_ell`` is the step-up count on ``p_{ell+1..m}`` with threshold
    ``(t_{ell+1}, ..., t_m)``.
    """
    p, t = np.asarray(p, dtype=float), np.asarray(t, dtype=float)
    rej = sort_and_cutoff(p, t, "SU")
    k = rej.size
    first = bool(np.all(np.isin(np.arange(ell), rej)))
    k_red = sort_and_cutoff(p[ell:], t[ell:], "SU").size if ell < p.size else 0
    return first == (k == k_red + ell)


def lemma_stepdown_holds(p, t) -> bool:
    """First hypothesis rejected iff ``k = k'_1 + 1`` (step-down, threshold shifted by one)."""
    p, t = np.asarray(p, dtype=float), np.asarray(t, dtype=float)
    rej = sort_and_cutoff(p, t, "SD")
    k = rej.size
    k_red = sort_and_cutoff(p[1:], t[1:], "SD").size if p.size > 1 else 0
    return (0 in rej) == (k == k_red + 1)
