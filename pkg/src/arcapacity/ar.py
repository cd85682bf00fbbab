"""Autoregressive models: synthesis, spectra, Burg estimation and order selection.

Coefficient convention
----------------------
``ArModel.coeffs`` holds the recursion weights alpha_1..alpha_p of

    x[t] = sum_i alpha_i * x[t - i] + e[t],   e ~ N(0, noise_variance)

The prediction-error filter used for the frequency response is
``a = [1, -alpha_1, ..., -alpha_p]`` so that

    H(f) = 1 / sum_k a_k exp(-j 2 pi f k),   S(f) = noise_variance * |H(f)|^2

Spectra live on the full grid f_i = i / n, i = 0..n-1, and use the
"power per bin" scale: the bin mean of S equals the process variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

STABILITY_MARGIN = 1e-6


class DegenerateSignalError(ValueError):
    """Raised when a signal carries no prediction-error energy (e.g. constant)."""


class UnstableModelError(ValueError):
    """Raised when an operation needs a stationary model and gets an unstable one."""


@dataclass(frozen=True)
class ArModel:
    coeffs: np.ndarray
    noise_variance: float

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("AR coefficients must be finite")
        if not (math.isfinite(self.noise_variance) and self.noise_variance > 0):
            raise ValueError(f"noise_variance must be positive, got {self.noise_variance}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def order(self) -> int:
        return int(self.coeffs.size)

    @property
    def denominator(self) -> np.ndarray:
        """Prediction-error filter ``[1, -alpha_1, ..., -alpha_p]``."""
        return np.concatenate(([1.0], -self.coeffs))

    @classmethod
    def from_denominator(cls, a: Sequence[float], noise_variance: float) -> "ArModel":
        a = np.asarray(a, dtype=float)
        if a.size == 0 or a[0] != 1.0:
            raise ValueError("denominator must start with 1")
        return cls(-a[1:], noise_variance)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "coeffs": [float(c) for c in self.coeffs],
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ArModel":
        coeffs = list(data["coeffs"])
        if int(data.get("order", len(coeffs))) != len(coeffs):
            raise ValueError("order does not match number of coefficients")
        return cls(np.asarray(coeffs, dtype=float), float(data["noise_variance"]))

    def __eq__(self, other):
        if not isinstance(other, ArModel):
            return NotImplemented
        return (
            self.noise_variance == other.noise_variance
            and np.array_equal(self.coeffs, other.coeffs)
        )

    def __hash__(self):
        return hash((self.coeffs.tobytes(), self.noise_variance))


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    """Power spectral density sampled on the uniform grid f_i = i / n_bins."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size < 1:
            raise ValueError("spectrum needs at least one bin")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("spectrum values must be finite and strictly positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_bins(self) -> int:
        return int(self.values.size)

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) / self.n_bins

    def is_conjugate_symmetric(self, rtol: float = 1e-9) -> bool:
        v = self.values
        return bool(np.allclose(v[1:], v[1:][::-1], rtol=rtol, atol=0.0))


@dataclass(frozen=True, eq=False)
class SignalVector:
    samples: np.ndarray
    class_id: str = ""
    sample_id: str = ""

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float).reshape(-1)
        if samples.size == 0:
            raise ValueError("signal vector must be non-empty")
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal vector entries must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return int(self.samples.size)

    def centered(self) -> np.ndarray:
        return self.samples - self.samples.mean()


def characteristic_roots(model: ArModel) -> np.ndarray:
    if model.order == 0:
        return np.zeros(0, dtype=complex)
    return np.roots(model.denominator)


def is_stable(model: ArModel, margin: float = STABILITY_MARGIN) -> bool:
    """True iff every characteristic root has modulus below ``1 - margin``."""
    roots = characteristic_roots(model)
    return bool(np.all(np.abs(roots) < 1.0 - margin))


def _require_stable(model: ArModel) -> None:
    if not is_stable(model):
        raise UnstableModelError(
            f"AR({model.order}) model is not stable (max |root| = "
            f"{np.max(np.abs(characteristic_roots(model))):.6g})"
        )


def psd_of_model(model: ArModel, n_bins: int) -> SpectrumEstimate:
    """Evaluate ``noise_variance * |H(f_i)|^2`` on the full ``n_bins`` grid."""
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    _require_stable(model)
    response = np.fft.fft(model.denominator, n=max(n_bins, model.order + 1))
    if response.size != n_bins:
        # order >= n_bins: evaluate the polynomial directly on the coarse grid
        k = np.arange(model.order + 1)
        f = np.arange(n_bins) / n_bins
        response = np.exp(-2j * np.pi * np.outer(f, k)) @ model.denominator
    power = np.abs(response) ** 2
    if np.any(power <= np.finfo(float).tiny):
        raise UnstableModelError("model response has a zero on the frequency grid")
    return SpectrumEstimate(model.noise_variance / power)


def default_burn_in(order: int) -> int:
    return max(10 * order, 500)


def filter_noise(model: ArModel, noise: np.ndarray, burn_in: int) -> np.ndarray:
    """Run white noise (last axis = time) through the AR recursion and drop the burn-in."""
    out = lfilter([1.0], model.denominator, noise, axis=-1)
    return out[..., burn_in:]


def synthesize(
    model: ArModel,
    length: int,
    seed: int,
    burn_in: int | None = None,
    class_id: str = "",
    sample_id: str = "",
) -> SignalVector:
    """Draw one realization of ``model``; deterministic for a given seed."""
    if length < 1:
        raise ValueError("length must be positive")
    _require_stable(model)
    if burn_in is None:
        burn_in = default_burn_in(model.order)
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, math.sqrt(model.noise_variance), size=burn_in + length)
    return SignalVector(filter_noise(model, noise, burn_in), class_id, sample_id)


def _as_array(x: SignalVector | np.ndarray) -> np.ndarray:
    if isinstance(x, SignalVector):
        return x.samples
    return np.asarray(x, dtype=float).reshape(-1)


def burg_recursion(x: SignalVector | np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Burg's method on the mean-removed signal.

    Returns:
        ``(a, errors)`` where ``a`` is the order-``order`` prediction-error
        filter (leading 1) and ``errors[m]`` the residual variance at order m,
        for m = 0..order.
    """
    samples = _as_array(x)
    n = samples.size
    if order < 0:
        raise ValueError("order must be non-negative")
    if order >= n - 1:
        raise ValueError(f"order {order} too large for a signal of length {n}")
    xc = samples - samples.mean()
    energy = float(np.dot(xc, xc))
    peak = float(np.max(np.abs(samples)))
    if peak == 0.0 or energy <= 1e-20 * n * peak * peak:
        raise DegenerateSignalError("signal is constant; Burg recursion is undefined")

    a = np.ones(1)
    errors = np.empty(order + 1)
    errors[0] = energy / n
    fwd = xc.copy()
    bwd = xc.copy()
    for m in range(1, order + 1):
        f = fwd[m:]
        b = bwd[m - 1 : -1]
        den = np.dot(f, f) + np.dot(b, b)
        if den <= 0.0:
            raise DegenerateSignalError(f"zero prediction-error energy at order {m}")
        k = -2.0 * np.dot(b, f) / den
        fwd[m:], bwd[m:] = f + k * b, b + k * f
        a = np.concatenate((a, [0.0]))
        a = a + k * a[::-1]
        errors[m] = errors[m - 1] * (1.0 - k * k)
    return a, errors


def burg_estimate(x: SignalVector | np.ndarray, order: int) -> ArModel:
    """Fit an AR(``order``) model with Burg's maximum entropy method."""
    a, errors = burg_recursion(x, order)
    return ArModel.from_denominator(a, errors[-1])


def aic_from_errors(n: int, errors: np.ndarray, orders: Sequence[int]) -> np.ndarray:
    orders = np.asarray(orders, dtype=int)
    return n * np.log(errors[orders]) + 2.0 * orders


def aic_score(x: SignalVector | np.ndarray, order: int) -> float:
    """``n * ln(residual variance) + 2 * order`` using the Burg residual."""
    if order < 1:
        raise ValueError("order must be positive")
    n = _as_array(x).size
    _, errors = burg_recursion(x, order)
    return float(aic_from_errors(n, errors, [order])[0])


@dataclass
class OrderSelection:
    order: int
    candidate_orders: list[int]
    mean_aic: list[float]
    per_sample_aic: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "candidate_orders": list(self.candidate_orders),
            "mean_aic": list(self.mean_aic),
            "mean_aic_per_sample": list(self.per_sample_aic),
        }


def average_aic_curve(
    x_set: Sequence[SignalVector | np.ndarray], candidate_orders: Sequence[int]
) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Mean AIC over ``x_set`` for each candidate order (and the per-sample mean)."""
    if not x_set:
        raise ValueError("need at least one signal vector")
    orders = sorted(set(int(o) for o in candidate_orders))
    if not orders:
        raise ValueError("need at least one candidate order")
    if orders[0] < 1:
        raise ValueError("candidate orders must be positive")
    totals = np.zeros(len(orders))
    per_sample = np.zeros(len(orders))
    for x in x_set:
        n = _as_array(x).size
        _, errors = burg_recursion(x, orders[-1])
        curve = aic_from_errors(n, errors, orders)
        totals += curve
        per_sample += curve / n
    return orders, totals / len(x_set), per_sample / len(x_set)


def select_order(
    x_set: Sequence[SignalVector | np.ndarray],
    candidate_orders: Sequence[int],
    rel_tol: float = 1e-3,
) -> OrderSelection:
    """Pick the order where the averaged AIC curve stops improving.

    Walking the sorted candidates, the first step whose AIC gain per sample
    falls below ``rel_tol`` ends the search and the order before that step is
    returned.
    """
    orders, mean_aic, per_sample = average_aic_curve(x_set, candidate_orders)
    chosen = orders[-1]
    for j in range(1, len(orders)):
        if per_sample[j - 1] - per_sample[j] < rel_tol:
            chosen = orders[j - 1]
            break
    return OrderSelection(chosen, orders, [float(v) for v in mean_aic],
                          [float(v) for v in per_sample])


def reflection_to_ar(reflection: Sequence[float], noise_variance: float = 1.0) -> ArModel:
    """Step-up (Levinson) recursion from reflection coefficients to an AR model."""
    a = np.ones(1)
    for k in reflection:
        if not abs(k) < 1.0:
            raise ValueError("reflection coefficients must lie in (-1, 1)")
        a = np.concatenate((a, [0.0]))
        a = a + k * a[::-1]
    return ArModel.from_denominator(a, noise_variance)


def autocovariance(model: ArModel, max_lag: int) -> np.ndarray:
    """Exact autocovariance r[0..max_lag] of a stable AR process.

    Solves the p+1 Yule-Walker equations for r[0..p] and extends by the
    recursion r[k] = sum_i alpha_i r[k - i].
    """
    _require_stable(model)
    p = model.order
    alpha = model.coeffs
    system = np.eye(p + 1)
    for k in range(p + 1):
        for i in range(1, p + 1):
            system[k, abs(k - i)] -= alpha[i - 1]
    rhs = np.zeros(p + 1)
    rhs[0] = model.noise_variance
    r0 = np.linalg.solve(system, rhs)
    r = np.zeros(max(max_lag, p) + 1)
    r[: p + 1] = r0
    for k in range(p + 1, r.size):
        r[k] = np.dot(alpha, r[k - 1 : k - p - 1 : -1]) if p else 0.0
    return r[: max_lag + 1]


def process_variance(model: ArModel) -> float:
    return float(autocovariance(model, 0)[0])
