"""End-to-end capacity pipeline: vectors -> AR spectra -> pairwise scores -> fits -> bounds.

Every stage writes its artifacts into the output directory before the next
stage reads them back, so a run can resume from any stage.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import bounds, fitting, io
from .ar import ArModel, SignalVector, SpectrumEstimate, burg_estimate, psd_of_model, select_order, synthesize
from .distance import ClassRecord, pairwise_scores
from .preprocess import (
    ClassEntry,
    DatasetManifest,
    GaborParams,
    SampleRef,
    enrollment_spectrum,
    image_to_vector,
    load_image,
    load_manifest,
    split_enrollment,
)
from .simulate import gen_population

logger = logging.getLogger(__name__)

STAGES = ("ingest", "order", "enroll", "distances", "fit", "bounds")
METRICS = ("rel_entropy", "loglik")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class SyntheticSpec:
    classes: int = 8
    order: int = 2
    samples_per_class: int = 6
    vector_length: int = 1024
    noise_variance: float = 1.0

    def validate(self) -> None:
        if self.classes < 2:
            raise ConfigError("synthetic.classes must be at least 2")
        if self.order < 1:
            raise ConfigError("synthetic.order must be at least 1")
        if self.samples_per_class < 2:
            raise ConfigError("synthetic.samples_per_class must be at least 2")
        if self.vector_length < 16:
            raise ConfigError("synthetic.vector_length must be at least 16")
        if not self.noise_variance > 0:
            raise ConfigError("synthetic.noise_variance must be positive")


@dataclass
class PipelineConfig:
    manifest: Path | None = None
    synthetic: SyntheticSpec | None = None
    seed: int = 0
    split_fraction: float = 0.5
    gabor: GaborParams = field(default_factory=GaborParams)
    ar_order: int | None = None
    candidate_orders: list[int] = field(default_factory=lambda: list(range(1, 21)))
    order_rel_tol: float = 1e-3
    histogram_bins: int = fitting.DEFAULT_BINS
    k_range: tuple[int, int] = fitting.DEFAULT_K_RANGE
    p_points: int = fitting.DEFAULT_P_POINTS
    parameterization: str = fitting.COMPLEX
    noise_variances: list[float] = field(default_factory=lambda: list(bounds.TABLE1_NOISE_VARIANCES))
    taus: list[float] = field(default_factory=lambda: list(bounds.TABLE2_TAUS))
    deltas: list[float] = field(default_factory=lambda: list(bounds.TABLE2_DELTAS))
    fit_overrides: dict[str, fitting.ImposterFit] = field(default_factory=dict)
    out: Path = Path("out")
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        base = Path(base_dir)
        cfg = cls()
        known = {"data", "seed", "split_fraction", "gabor", "ar", "histogram_bins", "fit", "bounds", "out", "threads"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        source = data.get("data", {"synthetic": {}})
        if "manifest" in source and "synthetic" in source:
            raise ConfigError("data must name either a manifest or a synthetic spec, not both")
        try:
            if "manifest" in source:
                p = Path(source["manifest"])
                cfg.manifest = p if p.is_absolute() else base / p
            else:
                cfg.synthetic = SyntheticSpec(**source.get("synthetic", {}))
                cfg.synthetic.validate()
            cfg.seed = int(data.get("seed", cfg.seed))
            cfg.split_fraction = float(data.get("split_fraction", cfg.split_fraction))
            if "gabor" in data:
                cfg.gabor = GaborParams(**data["gabor"])
            ar = data.get("ar", {})
            cfg.ar_order = ar.get("order")
            if "candidate_orders" in ar:
                cfg.candidate_orders = [int(o) for o in ar["candidate_orders"]]
            cfg.order_rel_tol = float(ar.get("rel_tol", cfg.order_rel_tol))
            cfg.histogram_bins = int(data.get("histogram_bins", cfg.histogram_bins))
            fit = data.get("fit", {})
            cfg.k_range = tuple(int(k) for k in fit.get("k_range", cfg.k_range))
            cfg.p_points = int(fit.get("p_points", cfg.p_points))
            cfg.parameterization = fit.get("parameterization", cfg.parameterization)
            bnd = data.get("bounds", {})
            cfg.noise_variances = [float(v) for v in bnd.get("noise_variances", cfg.noise_variances)]
            cfg.taus = [float(v) for v in bnd.get("taus", cfg.taus)]
            cfg.deltas = [float(v) for v in bnd.get("deltas", cfg.deltas)]
            for metric, spec in bnd.get("fits", {}).items():
                if metric not in METRICS:
                    raise ConfigError(f"bounds.fits: unknown metric {metric!r}")
                spec = dict(spec)
                spec.setdefault("parameterization", cfg.parameterization)
                cfg.fit_overrides[metric] = fitting.ImposterFit.from_dict(spec)
            if "out" in data:
                p = Path(data["out"])
                cfg.out = p if p.is_absolute() else base / p
            cfg.threads = int(data.get("threads", cfg.threads))
        except (TypeError, KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction must lie in (0, 1)")
        if self.ar_order is not None and int(self.ar_order) < 1:
            raise ConfigError("ar.order must be positive")
        if not self.candidate_orders or min(self.candidate_orders) < 1:
            raise ConfigError("ar.candidate_orders must be non-empty positive integers")
        if self.histogram_bins < 1:
            raise ConfigError("histogram_bins must be positive")
        if self.k_range[0] < 1 or self.k_range[1] < self.k_range[0]:
            raise ConfigError("fit.k_range must be an increasing pair of positive integers")
        if self.p_points < 1:
            raise ConfigError("fit.p_points must be positive")
        if self.parameterization not in fitting.PARAMETERIZATIONS:
            raise ConfigError(f"fit.parameterization must be one of {fitting.PARAMETERIZATIONS}")
        if not self.noise_variances or min(self.noise_variances) <= 0:
            raise ConfigError("bounds.noise_variances must be non-empty and positive")
        if not self.taus or min(self.taus) <= 0:
            raise ConfigError("bounds.taus must be non-empty and positive")
        if not self.deltas or not all(0 < d < 1 for d in self.deltas):
            raise ConfigError("bounds.deltas must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be positive")


def _pmap(fn: Callable, items: list, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# -- ingest ---------------------------------------------------------------

def synthesize_dataset(spec: SyntheticSpec, seed: int, split_fraction: float, out_dir: Path):
    """Write a synthetic population as per-class vector files plus a manifest."""
    pop = gen_population(spec.classes, spec.order, seed, spec.samples_per_class,
                         spec.vector_length, spec.noise_variance)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for ci, (cid, model) in enumerate(zip(pop.class_ids(), pop.models)):
        class_dir = out_dir / cid
        class_dir.mkdir(exist_ok=True)
        refs = []
        for si in range(spec.samples_per_class):
            sid = f"s{si:03d}"
            x = synthesize(model, spec.vector_length, seed=_sample_seed(seed, ci, si))
            path = class_dir / f"{sid}.bin"
            io.save_vector(x, path)
            refs.append(SampleRef(path, "vector", sid))
        entries.append(ClassEntry(cid, tuple(refs)))
    manifest = DatasetManifest(tuple(entries), split_fraction)
    io.write_json(out_dir / "manifest.json", manifest.to_dict(out_dir))
    io.write_json(out_dir / "population.json", pop.to_dict())
    return pop, manifest


def _sample_seed(seed: int, class_index: int, sample_index: int) -> int:
    ss = np.random.SeedSequence([seed, class_index, sample_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _load_sample(args) -> SignalVector:
    ref, cid, gabor = args
    if ref.kind == "image":
        return image_to_vector(load_image(ref.path, cid, ref.sample_id), gabor)
    return io.load_vector(ref.path, cid, ref.sample_id)


def stage_ingest(cfg: PipelineConfig, out: Path) -> DatasetManifest:
    ingest_dir = out / "ingest"
    if cfg.synthetic is not None:
        _, manifest = synthesize_dataset(cfg.synthetic, cfg.seed, cfg.split_fraction, ingest_dir)
        io.write_json(out / "ingest.json", manifest.to_dict(out))
        return manifest
    source = load_manifest(cfg.manifest)
    jobs = [(ref, entry.class_id, cfg.gabor) for entry in source.classes for ref in entry.samples]
    vectors = _pmap(_load_sample, jobs, cfg.threads)
    lengths = {len(v) for v in vectors}
    if len(lengths) != 1:
        raise ValueError(f"all vectors must share one length, got {sorted(lengths)}")
    ingest_dir.mkdir(parents=True, exist_ok=True)
    entries, it = [], iter(vectors)
    for entry in source.classes:
        (ingest_dir / entry.class_id).mkdir(exist_ok=True)
        refs = []
        for ref in entry.samples:
            path = ingest_dir / entry.class_id / f"{ref.sample_id}.bin"
            io.save_vector(next(it), path)
            refs.append(SampleRef(path, "vector", ref.sample_id))
        entries.append(ClassEntry(entry.class_id, tuple(refs)))
    manifest = DatasetManifest(tuple(entries), source.split_fraction)
    io.write_json(out / "ingest.json", manifest.to_dict(out))
    return manifest


def _read_ingest(out: Path) -> tuple[DatasetManifest, dict[str, list[SignalVector]]]:
    manifest = DatasetManifest.from_dict(io.read_json(out / "ingest.json"), out)
    vectors = {
        e.class_id: [io.load_vector(r.path, e.class_id, r.sample_id) for r in e.samples]
        for e in manifest.classes
    }
    return manifest, vectors


# -- order / enroll -------------------------------------------------------

def stage_order(cfg: PipelineConfig, out: Path) -> dict:
    _, vectors = _read_ingest(out)
    if cfg.ar_order is not None:
        result = {"order": int(cfg.ar_order), "selected": False}
    else:
        everything = [v for vs in vectors.values() for v in vs]
        max_order = len(everything[0]) - 2
        candidates = [o for o in cfg.candidate_orders if o <= max_order]
        if not candidates:
            raise ValueError("no candidate order fits the vector length")
        sel = select_order(everything, candidates, cfg.order_rel_tol)
        result = {"selected": True, **sel.to_dict()}
    io.write_json(out / "order.json", result)
    return result


def _fit_psd(args) -> tuple[ArModel, SpectrumEstimate]:
    x, order = args
    model = burg_estimate(x, order)
    return model, psd_of_model(model, len(x))


def stage_enroll(cfg: PipelineConfig, out: Path) -> dict[str, SpectrumEstimate]:
    manifest, vectors = _read_ingest(out)
    order = int(io.read_json(out / "order.json")["order"])
    split = split_enrollment(manifest, cfg.seed)
    by_id = {cid: {v.sample_id: v for v in vs} for cid, vs in vectors.items()}
    jobs, owners = [], []
    for cid, (enroll, _) in split.items():
        for ref in enroll:
            jobs.append((by_id[cid][ref.sample_id], order))
            owners.append(cid)
    fitted = _pmap(_fit_psd, jobs, cfg.threads)
    models: dict[str, list[dict]] = {cid: [] for cid in split}
    spectra: dict[str, list[SpectrumEstimate]] = {cid: [] for cid in split}
    for cid, (model, psd) in zip(owners, fitted):
        models[cid].append(model.to_dict())
        spectra[cid].append(psd)
    templates = {cid: enrollment_spectrum(s) for cid, s in spectra.items()}
    io.write_json(out / "enroll.json", {
        "order": order,
        "split": {
            cid: {"enrollment": [r.sample_id for r in e], "authentication": [r.sample_id for r in a]}
            for cid, (e, a) in split.items()
        },
        "models": models,
    })
    io.write_csv(
        out / "enroll.csv",
        ["class_id", "bin", "value"],
        ([cid, i, float(v)] for cid, s in templates.items() for i, v in enumerate(s.values)),
    )
    return templates


def _read_templates(out: Path) -> dict[str, SpectrumEstimate]:
    values: dict[str, list[float]] = {}
    for row in io.read_csv(out / "enroll.csv"):
        values.setdefault(row["class_id"], []).append(float(row["value"]))
    return {cid: SpectrumEstimate(np.asarray(v)) for cid, v in values.items()}


# -- distances / fit / bounds ---------------------------------------------

def stage_distances(cfg: PipelineConfig, out: Path) -> list:
    _, vectors = _read_ingest(out)
    templates = _read_templates(out)
    split = io.read_json(out / "enroll.json")["split"]
    records = []
    for cid, template in templates.items():
        auth_ids = set(split[cid]["authentication"])
        auth = [v for v in vectors[cid] if v.sample_id in auth_ids]
        records.append(ClassRecord(cid, template, auth))
    scores = pairwise_scores(records, workers=cfg.threads)
    io.write_csv(
        out / "distances.csv",
        ["class_m", "class_k", "loglik", "rel_entropy"],
        ([s.class_m, s.class_k, s.loglik, s.rel_entropy] for s in scores),
    )
    return scores


def stage_fit(cfg: PipelineConfig, out: Path) -> dict[str, fitting.ImposterFit]:
    rows = io.read_csv(out / "distances.csv")
    fits, report = {}, {}
    for metric in METRICS:
        scores = [float(r[metric]) for r in rows]
        hist = fitting.build_histogram(scores, cfg.histogram_bins)
        p_grid = fitting.default_p_grid(hist.mean, cfg.k_range[1], cfg.p_points)
        fit = fitting.fit_chisquare(hist, cfg.k_range, p_grid, cfg.parameterization)
        fits[metric] = fit
        report[metric] = {**fit.to_dict(metric), "histogram": hist.to_dict()}
    io.write_json(out / "fit.json", report)
    return fits


def _read_fits(cfg: PipelineConfig, out: Path) -> dict[str, fitting.ImposterFit]:
    fits = {}
    path = out / "fit.json"
    if path.exists():
        fits = {m: fitting.ImposterFit.from_dict(d) for m, d in io.read_json(path).items()}
    fits.update(cfg.fit_overrides)
    if not fits:
        raise FileNotFoundError(f"no fit.json in {out} and no bounds.fits in the config")
    return fits


def stage_bounds(cfg: PipelineConfig, out: Path) -> dict[str, dict[str, bounds.BoundReport]]:
    fits = _read_fits(cfg, out)
    reports: dict[str, dict[str, bounds.BoundReport]] = {}
    for metric in METRICS:
        if metric not in fits:
            continue
        fit = fits[metric]
        reports[metric] = {
            "sphere_packing": bounds.sphere_packing_curve(fit.K, fit.P, cfg.noise_variances),
            "daugman": bounds.daugman_curve(fit, cfg.taus, cfg.deltas),
        }
    io.write_csv(
        out / "bounds_sphere_packing.csv",
        ["metric", "abscissa", "max_population"],
        ([m, *row] for m, r in reports.items() for row in r["sphere_packing"].rows),
    )
    io.write_csv(
        out / "bounds_daugman.csv",
        ["metric", "abscissa", "max_population", "delta"],
        ([m, *row] for m, r in reports.items() for row in r["daugman"].rows),
    )
    io.write_json(out / "bounds.json", {m: {k: b.to_dict() for k, b in r.items()} for m, r in reports.items()})
    plot_dir = out / "plot"
    plot_dir.mkdir(exist_ok=True)
    for metric, r in reports.items():
        for kind, report in r.items():
            for name, series in report.series().items():
                label = name.replace("=", "_")
                fname = f"{kind}_{metric}.dat" if kind == "sphere_packing" else f"{kind}_{metric}_{label}.dat"
                (plot_dir / fname).write_text("".join(f"{x!r} {y}\n" for x, y in series))
    return reports


_RUNNERS = {
    "ingest": stage_ingest,
    "order": stage_order,
    "enroll": stage_enroll,
    "distances": stage_distances,
    "fit": stage_fit,
    "bounds": stage_bounds,
}


def run_pipeline(cfg: PipelineConfig, start: str = "ingest", stop: str = "bounds") -> dict:
    """Run stages ``start..stop`` (inclusive); returns each stage's result by name."""
    if start not in STAGES or stop not in STAGES:
        raise ConfigError(f"stages must be among {STAGES}")
    i0, i1 = STAGES.index(start), STAGES.index(stop)
    if i0 > i1:
        raise ConfigError(f"start stage {start!r} comes after stop stage {stop!r}")
    if i0 == 0 and cfg.manifest is not None and not Path(cfg.manifest).exists():
        raise StageError("ingest", f"manifest not found: {cfg.manifest}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for stage in STAGES[i0 : i1 + 1]:
        logger.info("stage %s", stage)
        try:
            results[stage] = _RUNNERS[stage](cfg, out)
        except StageError:
            raise
        except (ValueError, FileNotFoundError, OSError, KeyError) as exc:
            raise StageError(stage, str(exc)) from exc
    return results


def summary_lines(out: Path) -> list[str]:
    """Human-readable summary of whatever artifacts exist in ``out``."""
    lines = []
    if (out / "order.json").exists():
        lines.append(f"AR order: {io.read_json(out / 'order.json')['order']}")
    if (out / "distances.csv").exists():
        lines.append(f"pair scores: {len(io.read_csv(out / 'distances.csv'))}")
    if (out / "fit.json").exists():
        for metric, d in io.read_json(out / "fit.json").items():
            lines.append(f"fit {metric}: K={d['K']} P={d['P']:.6g} lse={d['lse']:.3g}")
    if (out / "bounds.json").exists():
        data = io.read_json(out / "bounds.json")
        for metric, reps in data.items():
            sp = reps["sphere_packing"]["rows"]
            lines.append(f"sphere packing ({metric}):")
            lines.append("  noise_var  max_population")
            for row in sp:
                lines.append(f"  {row['abscissa']:>9g}  {bounds.format_population(row['max_population'])}")
            dg = reps["daugman"]["rows"]
            deltas = reps["daugman"]["inputs"]["deltas"]
            lines.append(f"daugman-like ({metric}):")
            lines.append("  tau       " + "  ".join(f"d={d:<8g}" for d in deltas))
            taus = sorted({row["abscissa"] for row in dg})
            for tau in taus:
                cells = {row["delta"]: row["max_population"] for row in dg if row["abscissa"] == tau}
                lines.append(f"  {tau:<9g} " + "  ".join(f"{bounds.format_population(cells[d]):<10}" for d in deltas))
    return lines
