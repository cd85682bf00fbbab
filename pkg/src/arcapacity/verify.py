"""Self-checks of the detection theory on synthetic data (the ``verify`` command)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ar import ArModel, psd_of_model
from .distance import avg_periodogram, loglik_asymptotic, relative_entropy
from .simulate import SyntheticPopulation, erlang_check, gen_population, run_experiment, sample_vectors


@dataclass
class VerifySettings:
    seed: int = 0
    populations: int = 3
    classes: int = 5
    order: int = 2
    vector_length: int = 256
    n_avg: int = 5
    trials: int = 300
    erlang_configs: int = 20
    erlang_trials: int = 5000
    erlang_bins: int = 64
    consistency_n_avg: int = 200
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "VerifySettings":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown verify settings: {sorted(unknown)}")
        return cls(**data)


@dataclass
class SuiteResult:
    name: str
    status: str
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("pass", "expected-degenerate")

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "details": self.details}


def union_bound_suite(s: VerifySettings) -> SuiteResult:
    violations = 0
    worst = -np.inf
    for p in range(s.populations):
        pop = gen_population(s.classes, s.order, s.seed + p, s.n_avg, s.vector_length)
        em = run_experiment(pop, s.trials, workers=s.workers)
        violations += int(np.sum(~em.union_bound_holds()))
        worst = max(worst, float(np.max(em.mary - em.union_sum())))
    return SuiteResult(
        "union_bound",
        "pass" if violations == 0 else "fail",
        {"populations": s.populations, "violations": violations, "max_mary_minus_union": worst},
    )


def random_erlang_config(rng: np.random.Generator, n_bins: int):
    """Two random AR(2) spectra and an interior bin where S_m < S_k."""
    from .ar import reflection_to_ar

    while True:
        sm = psd_of_model(reflection_to_ar(rng.uniform(-0.9, 0.9, 2)), n_bins).values
        sk = psd_of_model(reflection_to_ar(rng.uniform(-0.9, 0.9, 2)), n_bins).values
        interior = np.arange(1, (n_bins + 1) // 2)
        valid = interior[sm[interior] < sk[interior]]
        if valid.size:
            return sm, sk, int(rng.choice(valid)), int(rng.integers(1, 11))


def erlang_suite(s: VerifySettings) -> SuiteResult:
    rng = np.random.default_rng([s.seed, 0xE71A])
    passed = 0
    for c in range(s.erlang_configs):
        sm, sk, i, n_avg = random_erlang_config(rng, s.erlang_bins)
        res = erlang_check(sm, sk, i, n_avg, s.erlang_trials, seed=s.seed * 1000 + c)
        passed += res.passed
    rate = passed / s.erlang_configs
    return SuiteResult("erlang", "pass" if rate >= 0.95 else "fail",
                       {"configs": s.erlang_configs, "pass_rate": rate})


def consistency_suite(s: VerifySettings) -> SuiteResult:
    """Averaged statistic under the true class approaches the relative entropy."""
    m, k = ArModel([0.3], 1.0), ArModel([0.6], 1.0)
    n = 1024
    sm, sk = psd_of_model(m, n), psd_of_model(k, n)
    x = sample_vectors(m, s.consistency_n_avg, n, np.random.default_rng([s.seed, 0xC0]))
    lam = loglik_asymptotic(sm, sk, avg_periodogram(list(x)))
    d = relative_entropy(sm, sk)
    rel = abs(lam - d) / d
    return SuiteResult("consistency", "pass" if rel < 0.05 else "fail",
                       {"loglik": lam, "rel_entropy": d, "relative_gap": rel})


def degenerate_suite(s: VerifySettings) -> SuiteResult:
    """Two identical classes: decisions are coin flips, error rate near 0.5."""
    model = ArModel([0.5], 1.0)
    pop = SyntheticPopulation((model, model), s.n_avg, s.vector_length, s.seed)
    em = run_experiment(pop, s.trials)
    se = float(np.sqrt(0.25 / s.trials))
    near_half = bool(np.all(np.abs(em.mary - 0.5) <= 4 * se))
    return SuiteResult("identical_classes", "expected-degenerate" if near_half else "fail",
                       {"mary_error": em.mary.tolist(), "expected": 0.5})


SUITES = {
    "union_bound": union_bound_suite,
    "erlang": erlang_suite,
    "consistency": consistency_suite,
    "identical_classes": degenerate_suite,
}


def run_suites(settings: VerifySettings, names=None) -> dict:
    results = [SUITES[name](settings) for name in (names or SUITES)]
    return {
        "passed": all(r.ok for r in results),
        "seed": settings.seed,
        "suites": [r.to_dict() for r in results],
    }
