"""Synthetic AR populations and Monte Carlo checks of the detection theory."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .ar import ArModel, SpectrumEstimate, default_burn_in, filter_noise, is_stable, psd_of_model, reflection_to_ar
from .distance import bin_statistic, erlang_cdf

REFLECTION_LIMIT = 0.95


@dataclass(frozen=True)
class SyntheticPopulation:
    models: tuple[ArModel, ...]
    n_samples_per_class: int = 5
    vector_length: int = 1024
    seed: int = 0

    def __post_init__(self):
        if len(self.models) < 2:
            raise ValueError("a population needs at least two classes")
        if self.n_samples_per_class < 1:
            raise ValueError("need at least one sample per class")
        if self.vector_length < 2:
            raise ValueError("vector length must be at least 2")
        for m in self.models:
            if not is_stable(m):
                raise ValueError("population models must be stable")

    @property
    def M(self) -> int:
        return len(self.models)

    def spectra(self) -> list[SpectrumEstimate]:
        return [psd_of_model(m, self.vector_length) for m in self.models]

    def class_ids(self) -> list[str]:
        width = len(str(self.M - 1))
        return [f"c{i:0{width}d}" for i in range(self.M)]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_samples_per_class": self.n_samples_per_class,
            "vector_length": self.vector_length,
            "models": [m.to_dict() for m in self.models],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticPopulation":
        return cls(
            tuple(ArModel.from_dict(m) for m in data["models"]),
            int(data["n_samples_per_class"]),
            int(data["vector_length"]),
            int(data["seed"]),
        )


def gen_population(
    M: int,
    order: int,
    seed: int,
    n_samples_per_class: int = 5,
    vector_length: int = 1024,
    noise_variance: float = 1.0,
) -> SyntheticPopulation:
    """Draw M stable AR(order) models from uniform reflection coefficients."""
    if M < 2:
        raise ValueError("M must be at least 2")
    if order < 1:
        raise ValueError("order must be at least 1")
    rng = np.random.default_rng(seed)
    refl = rng.uniform(-REFLECTION_LIMIT, REFLECTION_LIMIT, size=(M, order))
    models = tuple(reflection_to_ar(k, noise_variance) for k in refl)
    return SyntheticPopulation(models, n_samples_per_class, vector_length, seed)


def sample_vectors(model: ArModel, count: int, length: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent realizations as rows of a ``(count, length)`` array."""
    burn = default_burn_in(model.order)
    noise = rng.normal(0.0, math.sqrt(model.noise_variance), size=(count, burn + length))
    return filter_noise(model, noise, burn)


@dataclass
class ErrorMatrix:
    """Empirical pairwise error rates ``pairwise[m, k] = P(decide k | m)`` and M-ary errors.

    Ties (statistic exactly 0) count as half an error, the expected cost of a
    fair coin flip.
    """

    pairwise: np.ndarray
    mary: np.ndarray
    trials: int
    slack_se: np.ndarray

    @property
    def M(self) -> int:
        return int(self.mary.size)

    def union_sum(self) -> np.ndarray:
        return self.pairwise.sum(axis=1)

    def union_bound_holds(self, n_se: float = 3.0) -> np.ndarray:
        """Per class: M-ary error <= summed pairwise errors + n_se standard errors."""
        return self.mary <= self.union_sum() + n_se * self.slack_se

    def mary_se(self) -> np.ndarray:
        p = self.mary
        return np.sqrt(np.maximum(p * (1 - p), 0.0) / self.trials)

    def to_rows(self, class_ids: Sequence[str]) -> list[list]:
        rows = []
        for m, cm in enumerate(class_ids):
            rows.append([cm] + [float(v) for v in self.pairwise[m]] + [float(self.mary[m])])
        return rows

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "pairwise": self.pairwise.tolist(),
            "mary": self.mary.tolist(),
            "slack_se": self.slack_se.tolist(),
        }


def _trial_block(args):
    pop, spectra_inv, log_spectra, m, trials, n_avg, seed = args
    M = pop.M
    pair_err = np.zeros(M)
    mary_err = 0.0
    diff_sum = 0.0
    diff_sq = 0.0
    model = pop.models[m]
    for t in range(trials):
        rng = np.random.default_rng([seed, m, t])
        x = sample_vectors(model, n_avg, pop.vector_length, rng)
        pav = np.mean(np.abs(np.fft.fft(x, axis=1)) ** 2, axis=0) / pop.vector_length
        # Whittle log-likelihood per class; the pairwise statistic is the difference
        loglik = -(spectra_inv @ pav) - log_spectra
        lam = loglik[m] - loglik
        errs = np.where(lam < 0, 1.0, np.where(lam == 0, 0.5, 0.0))
        errs[m] = 0.0
        best = np.flatnonzero(loglik == loglik.max())
        winner = best[0] if best.size == 1 else rng.choice(best)
        e = float(winner != m)
        pair_err += errs
        mary_err += e
        d = e - errs.sum()
        diff_sum += d
        diff_sq += d * d
    return pair_err, mary_err, diff_sum, diff_sq


def run_experiment(
    pop: SyntheticPopulation,
    trials: int,
    seed: int | None = None,
    workers: int = 1,
) -> ErrorMatrix:
    """Monte Carlo error rates of the spectral log-likelihood test with threshold 0.

    Each trial draws ``pop.n_samples_per_class`` query vectors from every class
    in turn, averages their periodograms and tests against every other class.
    The M-ary decision is the argmax of the spectral log-likelihood (ties broken
    at random), equivalently the class winning all its pairwise tests.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    seed = pop.seed if seed is None else seed
    spectra = np.vstack([s.values for s in pop.spectra()])
    inv = 1.0 / spectra
    log_sum = np.log(spectra).sum(axis=1)
    jobs = [(pop, inv, log_sum, m, trials, pop.n_samples_per_class, seed) for m in range(pop.M)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_block, jobs))
    else:
        results = [_trial_block(j) for j in jobs]
    pairwise = np.vstack([r[0] for r in results]) / trials
    mary = np.array([r[1] for r in results]) / trials
    mean_d = np.array([r[2] for r in results]) / trials
    var_d = np.array([r[3] for r in results]) / trials - mean_d**2
    slack_se = np.sqrt(np.maximum(var_d, 0.0) / trials)
    return ErrorMatrix(pairwise, mary, trials, slack_se)


@dataclass(frozen=True)
class ErlangCheck:
    statistic: float
    pvalue: float
    passed: bool


def circulant_vectors(spectrum: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Real Gaussian vectors whose DFT bins are independent with ``E|X_i|^2 / n = spectrum[i]``."""
    n = spectrum.size
    half = n // 2 + 1
    scale = np.sqrt(n * spectrum[:half])
    coef = (rng.standard_normal((count, half)) + 1j * rng.standard_normal((count, half))) / math.sqrt(2.0)
    coef *= scale
    coef[:, 0] = scale[0] * rng.standard_normal(count)
    if n % 2 == 0:
        coef[:, -1] = scale[-1] * rng.standard_normal(count)
    return np.fft.irfft(coef, n=n, axis=1)


def erlang_check(
    s_m: SpectrumEstimate | np.ndarray,
    s_k: SpectrumEstimate | np.ndarray,
    bin_index: int,
    n_avg: int,
    trials: int,
    seed: int = 0,
    alpha: float = 0.01,
) -> ErlangCheck:
    """KS test of one bin's log-likelihood term against its Erlang law under class m.

    Query vectors are drawn as circulant Gaussian processes with spectrum ``s_m``,
    so their periodogram bins follow the exact complex-Gaussian model.
    """
    sm = np.asarray(getattr(s_m, "values", s_m), dtype=float)
    sk = np.asarray(getattr(s_k, "values", s_k), dtype=float)
    if sm.shape != sk.shape:
        raise ValueError("spectra are on different grids")
    n = sm.size
    if not 0 < bin_index < (n + 1) // 2:
        raise ValueError("bin index must be an interior (complex) frequency bin")
    if not sm[bin_index] < sk[bin_index]:
        raise ValueError("Erlang law requires S_m < S_k at the tested bin")
    rng = np.random.default_rng(seed)
    samples = np.empty(trials)
    chunk = max(1, 200_000 // max(n * n_avg, 1))
    for start in range(0, trials, chunk):
        stop = min(trials, start + chunk)
        x = circulant_vectors(sm, (stop - start) * n_avg, rng)
        power = np.abs(np.fft.fft(x, axis=1)[:, bin_index]) ** 2 / n
        pav = power.reshape(stop - start, n_avg).mean(axis=1)
        samples[start:stop] = bin_statistic(sm[bin_index], sk[bin_index], pav)
    shift = math.log(sm[bin_index] / sk[bin_index])
    scale = 1.0 - sm[bin_index] / sk[bin_index]
    result = stats.kstest(samples, lambda v: erlang_cdf(v, n_avg, shift, scale))
    return ErlangCheck(float(result.statistic), float(result.pvalue), bool(result.pvalue >= alpha))
