"""Pairwise detection statistics between classes with Gaussian AR spectra.

All spectra and periodograms share the "power per bin" scale: a periodogram
bin is ``|DFT(x)_i|^2 / n`` and its expectation is the model PSD value at
that bin. Under that convention the asymptotic log-likelihood evaluated at
``pav = S_m`` is exactly the relative entropy ``d(m, k)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, toeplitz
from scipy.special import gammainc, gammaln

from .ar import ArModel, SignalVector, SpectrumEstimate, autocovariance, is_stable

SPECTRUM_FLOOR = 1e-30
EXACT_MAX_LENGTH = 2048
EXACT_MAX_CONDITION = 1e12


class IllConditionedError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Periodogram:
    values: np.ndarray
    n_images_averaged: int = 1

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("periodogram values must be finite and non-negative")
        if self.n_images_averaged < 1:
            raise ValueError("n_images_averaged must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_bins(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class PairScore:
    class_m: str
    class_k: str
    loglik: float
    rel_entropy: float


@dataclass
class ClassRecord:
    """A class template (enrollment spectrum) plus its held-out vectors."""

    class_id: str
    enrollment: SpectrumEstimate
    authentication: list[SignalVector] = field(default_factory=list)


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, SignalVector) else np.asarray(x, dtype=float).reshape(-1)


def periodogram(x: SignalVector | np.ndarray) -> Periodogram:
    samples = _samples(x)
    if samples.size < 2:
        raise ValueError("periodogram needs at least two samples")
    return Periodogram(np.abs(np.fft.fft(samples)) ** 2 / samples.size, 1)


def avg_periodogram(xs: Sequence[SignalVector | np.ndarray]) -> Periodogram:
    if not xs:
        raise ValueError("need at least one vector")
    stack = [_samples(x) for x in xs]
    n = stack[0].size
    if any(s.size != n for s in stack):
        raise ValueError("vectors must have equal lengths")
    if n < 2:
        raise ValueError("periodogram needs at least two samples")
    power = np.abs(np.fft.fft(np.vstack(stack), axis=1)) ** 2 / n
    return Periodogram(power.mean(axis=0), len(stack))


def _values(s) -> np.ndarray:
    v = s.values if hasattr(s, "values") else np.asarray(s, dtype=float).reshape(-1)
    return np.asarray(v, dtype=float)


def _spectra(s_m, s_k) -> tuple[np.ndarray, np.ndarray]:
    a, b = _values(s_m), _values(s_k)
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.size} vs {b.size} bins")
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("spectrum values must be strictly positive")
    return np.maximum(a, SPECTRUM_FLOOR), np.maximum(b, SPECTRUM_FLOOR)


def loglik_asymptotic(s_m, s_k, pav) -> float:
    """Spectral log-likelihood ratio of class m against class k, in nats.

    ``-sum_i [(1/S_m - 1/S_k) * pav + ln(S_m / S_k)]``; positive values favour m.
    """
    a, b = _spectra(s_m, s_k)
    p = _values(pav)
    if p.shape != a.shape:
        raise ValueError(f"grid mismatch: periodogram has {p.size} bins, spectra {a.size}")
    return float(-np.sum((1.0 / a - 1.0 / b) * p + np.log(a / b)))


def relative_entropy(s_m, s_k) -> float:
    """``sum_i [S_m/S_k - ln(S_m/S_k) - 1]``: the mean of the log-likelihood ratio under m."""
    a, b = _spectra(s_m, s_k)
    ratio = a / b
    return float(np.sum(ratio - np.log(ratio) - 1.0))


def loglik_exact(
    ys: Sequence[SignalVector | np.ndarray],
    model_m: ArModel,
    model_k: ArModel,
    max_length: int = EXACT_MAX_LENGTH,
    max_condition: float = EXACT_MAX_CONDITION,
) -> float:
    """Gaussian log-likelihood ratio with exact Toeplitz AR covariances.

    Averages the per-vector log-likelihood ratio over ``ys``. Meant as an
    oracle for short vectors; cost is O(n^3).
    """
    if not ys:
        raise ValueError("need at least one vector")
    data = np.vstack([_samples(y) for y in ys])
    n = data.shape[1]
    if n > max_length:
        raise ValueError(f"vector length {n} exceeds exact-likelihood cap {max_length}")
    for model in (model_m, model_k):
        if not is_stable(model):
            raise ValueError("models must be stable")
    quad = []
    logdet = []
    for model in (model_m, model_k):
        cov = toeplitz(autocovariance(model, n - 1))
        if np.linalg.cond(cov) > max_condition:
            raise IllConditionedError("covariance matrix condition number exceeds cap")
        factor = cho_factor(cov, lower=True)
        solved = cho_solve(factor, data.T)
        quad.append(np.einsum("ij,ji->", data, solved) / data.shape[0])
        logdet.append(2.0 * np.sum(np.log(np.diag(factor[0]))))
    return float(-0.5 * (quad[0] - quad[1]) - 0.5 * (logdet[0] - logdet[1]))


def decide(loglik: float, threshold: float = 0.0, labels: tuple[str, str] = ("m", "k")) -> str:
    """Binary decision: ``labels[0]`` when the statistic exceeds the threshold, else ``labels[1]``."""
    return labels[0] if loglik > threshold else labels[1]


def erlang_pdf(x, n_avg: int, shift: float, scale: float):
    """Density of ``shift + scale * Gamma(n_avg, 1/n_avg)`` (an n_avg-Erlang law).

    With ``shift = ln(S_m/S_k)`` and ``scale = 1 - S_m/S_k`` this is the law of
    one bin's contribution to the log-likelihood statistic under class m.
    """
    if not scale > 0:
        raise ValueError("Erlang scale must be positive (requires S_m < S_k at the bin)")
    if n_avg < 1:
        raise ValueError("n_avg must be a positive integer")
    x = np.asarray(x, dtype=float)
    z = x - shift
    with np.errstate(divide="ignore", invalid="ignore"):
        log_pdf = (
            n_avg * math.log(n_avg / scale)
            + (n_avg - 1) * np.log(np.where(z > 0, z, 1.0))
            - gammaln(n_avg)
            - n_avg * z / scale
        )
    out = np.where(z > 0, np.exp(log_pdf), 0.0)
    return float(out) if out.ndim == 0 else out


def erlang_cdf(x, n_avg: int, shift: float, scale: float):
    if not scale > 0:
        raise ValueError("Erlang scale must be positive (requires S_m < S_k at the bin)")
    z = np.asarray(x, dtype=float) - shift
    out = np.where(z > 0, gammainc(n_avg, n_avg * np.maximum(z, 0.0) / scale), 0.0)
    return float(out) if out.ndim == 0 else out


def bin_statistic(s_m: float, s_k: float, pav_bin) -> np.ndarray:
    """One bin's term ``(1/S_m - 1/S_k) * pav + ln(S_m/S_k)`` (the summand of the LLR)."""
    return (1.0 / s_m - 1.0 / s_k) * np.asarray(pav_bin, dtype=float) + math.log(s_m / s_k)


def _score_pair(args) -> PairScore:
    cm, ck, pav = args
    return PairScore(
        cm.class_id,
        ck.class_id,
        loglik_asymptotic(cm.enrollment, ck.enrollment, pav),
        relative_entropy(cm.enrollment, ck.enrollment),
    )


def pairwise_scores(classes: Sequence[ClassRecord], workers: int = 1) -> list[PairScore]:
    """Scores for every ordered pair of distinct classes, sorted by (class_m, class_k).

    The log-likelihood uses class m's averaged authentication periodogram.
    """
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    ordered = sorted(classes, key=lambda c: c.class_id)
    ids = [c.class_id for c in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("class ids must be unique")
    pavs = {}
    for c in ordered:
        if not c.authentication:
            raise ValueError(f"class {c.class_id} has no authentication vectors")
        pavs[c.class_id] = avg_periodogram(c.authentication)
    jobs = [(cm, ck, pavs[cm.class_id]) for cm in ordered for ck in ordered if cm is not ck]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_score_pair, jobs))
    return [_score_pair(j) for j in jobs]
