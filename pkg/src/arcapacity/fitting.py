"""Imposter-score histograms and exhaustive least-squares Gamma / chi-square fits."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammainc, gammaln

logger = logging.getLogger(__name__)

MIN_SCORES = 30
DEFAULT_BINS = 50
DEFAULT_K_RANGE = (1, 20)
DEFAULT_P_POINTS = 200

# shape K, scale P: a sum of K squared complex Gaussians of variance P
COMPLEX = "complex"
# shape K/2, scale 2P: chi-square with K degrees of freedom scaled by P
CHI2 = "chi2"
PARAMETERIZATIONS = (COMPLEX, CHI2)


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScoreHistogram:
    bin_edges: np.ndarray
    densities: np.ndarray
    sample_count: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def mean(self) -> float:
        return float(np.sum(self.centers * self.densities * self.widths))

    def to_dict(self) -> dict:
        return {
            "bin_edges": [float(e) for e in self.bin_edges],
            "densities": [float(d) for d in self.densities],
            "sample_count": self.sample_count,
        }


@dataclass(frozen=True)
class ImposterFit:
    K: int
    P: float
    lse: float
    n_scores: int = 0
    parameterization: str = COMPLEX

    @property
    def mean(self) -> float:
        return self.K * self.P

    def to_dict(self, metric: str | None = None) -> dict:
        out = {
            "K": self.K,
            "P": self.P,
            "lse": self.lse,
            "n_scores": self.n_scores,
            "parameterization": self.parameterization,
        }
        if metric is not None:
            out["metric"] = metric
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ImposterFit":
        return cls(
            int(data["K"]),
            float(data["P"]),
            float(data.get("lse", 0.0)),
            int(data.get("n_scores", 0)),
            data.get("parameterization", COMPLEX),
        )


def build_histogram(scores: Sequence[float], n_bins: int = DEFAULT_BINS) -> ScoreHistogram:
    """Density histogram with equal-width bins on ``[0, max(scores)]``.

    Negative scores fall outside the support of the fitted family and are
    dropped (with a warning) before binning.
    """
    values = np.asarray(scores, dtype=float).reshape(-1)
    if not np.all(np.isfinite(values)):
        raise ValueError("scores must be finite")
    if values.size < MIN_SCORES:
        raise InsufficientDataError(f"need at least {MIN_SCORES} scores, got {values.size}")
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    if np.ptp(values) == 0.0:
        raise InsufficientDataError("all scores are equal; histogram range has zero width")
    negative = int(np.sum(values < 0))
    if negative:
        logger.warning("dropping %d negative scores from the imposter histogram", negative)
        values = values[values >= 0]
        if values.size < MIN_SCORES:
            raise InsufficientDataError(
                f"only {values.size} non-negative scores remain; need {MIN_SCORES}"
            )
    top = float(values.max())
    if top <= 0.0:
        raise InsufficientDataError("all scores are zero")
    densities, edges = np.histogram(values, bins=n_bins, range=(0.0, top), density=True)
    return ScoreHistogram(edges, densities, int(values.size))


def _shape_scale(K, P, parameterization: str):
    if parameterization == COMPLEX:
        return K, P
    if parameterization == CHI2:
        return 0.5 * np.asarray(K, dtype=float), 2.0 * np.asarray(P, dtype=float)
    raise ValueError(f"unknown parameterization {parameterization!r}")


def model_pdf(x, K: int, P: float, parameterization: str = COMPLEX):
    """Gamma density with mean ``K * P`` in the chosen parameterization."""
    shape, scale = _shape_scale(K, P, parameterization)
    x = np.asarray(x, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise ValueError("P must be positive")
    safe = np.where(x > 0, x, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        log_pdf = (shape - 1) * np.log(safe) - safe / scale - shape * np.log(scale) - gammaln(shape)
        pdf = np.where(x > 0, np.exp(log_pdf), 0.0)
    # x = 0: finite only for shape >= 1
    at_zero = np.where(np.asarray(shape) == 1, 1.0 / scale, np.where(np.asarray(shape) > 1, 0.0, np.inf))
    pdf = np.where(x == 0, at_zero, pdf)
    return float(pdf) if pdf.ndim == 0 else pdf


def default_p_grid(mean: float, k_max: int, n_points: int = DEFAULT_P_POINTS) -> np.ndarray:
    if not mean > 0:
        raise ValueError("score mean must be positive")
    return np.geomspace(mean / (10.0 * k_max), 10.0 * mean, n_points)


def lse_grid(
    hist: ScoreHistogram,
    k_values: np.ndarray,
    p_grid: np.ndarray,
    parameterization: str = COMPLEX,
) -> np.ndarray:
    """Sum of squared density residuals for every (K, P); shape ``(len(K), len(P))``."""
    centers = hist.centers
    out = np.empty((k_values.size, p_grid.size))
    for row, K in enumerate(k_values):
        pdf = model_pdf(centers[None, :], int(K), p_grid[:, None], parameterization)
        out[row] = np.sum((hist.densities[None, :] - pdf) ** 2, axis=1)
    return out


def fit_chisquare(
    hist: ScoreHistogram,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
    p_grid: Sequence[float] | None = None,
    parameterization: str = COMPLEX,
) -> ImposterFit:
    """Exhaustive least-squares search over ``K in k_range`` (inclusive) x ``p_grid``.

    Ties go to the smaller K, then the smaller P.
    """
    k_lo, k_hi = int(k_range[0]), int(k_range[1])
    if k_lo < 1 or k_hi < k_lo:
        raise ValueError(f"invalid K range {k_range}")
    if p_grid is None:
        p_grid = default_p_grid(hist.mean, k_hi)
    p_grid = np.sort(np.asarray(p_grid, dtype=float).reshape(-1))
    if p_grid.size == 0:
        raise ValueError("P grid is empty")
    if np.any(p_grid <= 0):
        raise ValueError("P grid must be positive")
    k_values = np.arange(k_lo, k_hi + 1)
    errors = lse_grid(hist, k_values, p_grid, parameterization)
    flat = int(np.argmin(errors))  # first occurrence -> smallest K, then smallest P
    i, j = divmod(flat, p_grid.size)
    return ImposterFit(
        int(k_values[i]), float(p_grid[j]), float(errors[i, j]), hist.sample_count, parameterization
    )


def fmr(fit: ImposterFit, tau):
    """Probability that an imposter score falls at or below ``tau``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    shape, scale = _shape_scale(fit.K, fit.P, fit.parameterization)
    out = gammainc(shape, tau / scale)
    return float(out) if np.ndim(out) == 0 else out
