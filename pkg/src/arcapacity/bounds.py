"""Maximum-population bounds: sphere packing and the Daugman-like enrollment bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .fitting import ImposterFit, fmr

# Fitted imposter constants reported for the CASIA-IrisV3 Interval and BATH subsets.
REFERENCE_FITS = {
    ("casia", "rel_entropy"): (4, 252.0),
    ("bath", "rel_entropy"): (4, 383.0),
    ("casia", "loglik"): (4, 106.0),
    ("bath", "loglik"): (3, 216.0),
}
TABLE1_NOISE_VARIANCES = (1, 10, 50, 100, 200, 300, 400, 500)
TABLE2_TAUS = (1, 10, 50, 100, 200, 400, 600, 800, 1000)
TABLE2_DELTAS = (0.5, 0.1, 0.01, 0.001)

# The smallest population the tables report is a pair of classes.
SPHERE_PACKING_MIN_POPULATION = 2
DAUGMAN_MIN_POPULATION = 1

_FLOOR_SLACK = 1e-12


class UnboundedPopulationError(ValueError):
    """FMR of zero: no finite population limit."""


def _floor(value: float) -> int:
    # absorb round-off on values that are mathematically integers
    return math.floor(value * (1.0 + _FLOOR_SLACK))


def sphere_packing_max_pop(
    K: int, P: float, noise_var: float, min_population: int = SPHERE_PACKING_MIN_POPULATION
) -> int:
    """``floor((1 + P / noise_var) ** (K / 2))``, never below ``min_population``."""
    if not (K > 0 and P > 0 and noise_var > 0):
        raise ValueError("K, P and noise_var must all be positive")
    log_value = 0.5 * K * math.log1p(P / noise_var)
    if log_value > 700:
        raise OverflowError("sphere-packing bound exceeds floating-point range")
    return max(_floor(math.exp(log_value)), min_population)


def daugman_max_pop(
    fmr_value: float, delta: float, min_population: int = DAUGMAN_MIN_POPULATION
) -> int:
    """``floor(ln(1 - delta) / ln(1 - fmr))``, never below ``min_population``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if fmr_value == 0.0:
        raise UnboundedPopulationError("FMR is zero; the population is unbounded")
    if not 0.0 < fmr_value < 1.0:
        raise ValueError("FMR must lie in (0, 1)")
    ratio = math.log1p(-delta) / math.log1p(-fmr_value)
    if not math.isfinite(ratio):
        raise OverflowError("Daugman-like bound exceeds floating-point range")
    return max(_floor(ratio), min_population)


@dataclass
class BoundReport:
    kind: str
    inputs: dict
    rows: list[tuple] = field(default_factory=list)

    @property
    def header(self) -> list[str]:
        if self.kind == "daugman":
            return ["abscissa", "max_population", "delta"]
        return ["abscissa", "max_population"]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "inputs": self.inputs,
            "rows": [dict(zip(self.header, row)) for row in self.rows],
        }

    def series(self) -> dict[str, list[tuple[float, int]]]:
        """Two-column plot series, one per curve."""
        if self.kind != "daugman":
            return {"sphere_packing": [(r[0], r[1]) for r in self.rows]}
        out: dict[str, list[tuple[float, int]]] = {}
        for tau, pop, delta in self.rows:
            out.setdefault(f"delta={delta!r}", []).append((tau, pop))
        return out


def sphere_packing_curve(
    K: int,
    P: float,
    noise_grid: Sequence[float],
    min_population: int = SPHERE_PACKING_MIN_POPULATION,
) -> BoundReport:
    if not noise_grid:
        raise ValueError("noise grid is empty")
    grid = sorted(float(v) for v in noise_grid)
    rows = [(v, sphere_packing_max_pop(K, P, v, min_population)) for v in grid]
    return BoundReport("sphere_packing", {"K": K, "P": P, "noise_variances": grid}, rows)


def daugman_curve(
    fit: ImposterFit,
    tau_grid: Sequence[float],
    deltas: Sequence[float],
    min_population: int = DAUGMAN_MIN_POPULATION,
) -> BoundReport:
    """Rows ``(tau, max_population, delta)`` sorted by tau, then by decreasing delta."""
    if not tau_grid or not deltas:
        raise ValueError("tau grid and delta list must be non-empty")
    taus = sorted(float(t) for t in tau_grid)
    if taus[0] <= 0:
        raise ValueError("tau values must be positive")
    ds = sorted((float(d) for d in deltas), reverse=True)
    rows = []
    for tau in taus:
        rate = fmr(fit, tau)
        for delta in ds:
            rows.append((tau, daugman_max_pop(rate, delta, min_population), delta))
    inputs = {
        "K": fit.K,
        "P": fit.P,
        "parameterization": fit.parameterization,
        "taus": taus,
        "deltas": ds,
    }
    return BoundReport("daugman", inputs, rows)


def format_population(value: int) -> str:
    """Table style: plain integers below 1000, three significant figures above."""
    if value < 1000:
        return str(value)
    mantissa, exponent = f"{value:.2e}".split("e")
    return f"{mantissa}e{int(exponent)}"
