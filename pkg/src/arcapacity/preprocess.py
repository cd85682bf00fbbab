"""From normalized iris strips to mean-centred feature vectors, plus dataset manifests.

Segmentation and polar unwrapping happen upstream; images arriving here are
already normalized rectangles with the pupil boundary along row 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import convolve2d

from .ar import SignalVector, SpectrumEstimate


@dataclass(frozen=True, eq=False)
class NormalizedImage:
    pixels: np.ndarray
    class_id: str = ""
    sample_id: str = ""

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=float)
        if pixels.ndim != 2 or min(pixels.shape) < 2:
            raise ValueError(f"image must be 2-D with at least 2x2 pixels, got {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("image pixels must be finite")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)


@dataclass(frozen=True)
class GaborParams:
    center_frequency: float = 1.0 / 9.0
    bandwidth: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.center_frequency < 0.5:
            raise ValueError("center frequency must lie in (0, 0.5) cycles/pixel")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    @property
    def envelope_width(self) -> float:
        """Gaussian envelope standard deviation in pixels."""
        return self.bandwidth / self.center_frequency


def gabor_kernel(params: GaborParams) -> np.ndarray:
    """Zero-mean complex Gabor kernel, carrier along columns, truncated at 3 envelope widths."""
    s = params.envelope_width
    half = int(math.ceil(3.0 * s))
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(float)
    kernel = np.exp(-(x * x + y * y) / (2.0 * s * s)) * np.exp(2j * np.pi * params.center_frequency * x)
    return kernel - kernel.mean()


def gabor_filter(image: NormalizedImage | np.ndarray, params: GaborParams) -> np.ndarray:
    pixels = image.pixels if isinstance(image, NormalizedImage) else np.asarray(image, dtype=float)
    kernel = gabor_kernel(params)
    if kernel.shape[0] > pixels.shape[0] or kernel.shape[1] > pixels.shape[1]:
        raise ValueError(
            f"Gabor kernel {kernel.shape} is larger than the image {pixels.shape}"
        )
    return convolve2d(pixels, kernel, mode="same", boundary="symm")


def crop_half(filtered: np.ndarray) -> np.ndarray:
    """Keep the pupil-side half of the rows (ceiling for odd row counts)."""
    filtered = np.asarray(filtered)
    if filtered.shape[0] < 2:
        raise ValueError("need at least two rows to crop")
    return filtered[: (filtered.shape[0] + 1) // 2]


def zigzag_indices(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    r, c = np.indices((rows, cols))
    r, c = r.ravel(), c.ravel()
    diag = r + c
    # odd anti-diagonals run downward (row increasing), even ones upward
    within = np.where(diag % 2 == 1, r, -r)
    order = np.lexsort((within, diag))
    return r[order], c[order]


def zigzag(matrix: np.ndarray) -> np.ndarray:
    """Alternating anti-diagonal scan from the top-left to the bottom-right corner."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError("zigzag needs a non-empty 2-D matrix")
    r, c = zigzag_indices(*matrix.shape)
    return matrix[r, c]


def vectorize(filtered: np.ndarray, class_id: str = "", sample_id: str = "") -> SignalVector:
    """Zigzag of the real part followed by zigzag of the imaginary part, mean-centred."""
    filtered = np.asarray(filtered)
    v = np.concatenate((zigzag(filtered.real), zigzag(np.imag(filtered))))
    return SignalVector(v - v.mean(), class_id, sample_id)


def image_to_vector(image: NormalizedImage, params: GaborParams) -> SignalVector:
    filtered = crop_half(gabor_filter(image, params))
    return vectorize(filtered, image.class_id, image.sample_id)


def load_image(path: str | Path, class_id: str = "", sample_id: str = "") -> NormalizedImage:
    from PIL import Image

    path = Path(path)
    with Image.open(path) as img:
        pixels = np.asarray(img)
    if pixels.ndim == 3:
        raise ValueError(f"{path}: expected a grayscale image")
    return NormalizedImage(pixels.astype(float), class_id or path.parent.name, sample_id or path.stem)


@dataclass(frozen=True)
class SampleRef:
    path: Path
    kind: str = "vector"
    sample_id: str = ""

    def __post_init__(self):
        if self.kind not in ("image", "vector"):
            raise ValueError(f"sample kind must be 'image' or 'vector', got {self.kind!r}")


@dataclass(frozen=True)
class ClassEntry:
    class_id: str
    samples: tuple[SampleRef, ...]


@dataclass(frozen=True)
class DatasetManifest:
    classes: tuple[ClassEntry, ...]
    split_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError("class ids must be unique")
        for c in self.classes:
            if len(c.samples) < 2:
                raise ValueError(f"class {c.class_id!r} needs at least 2 samples")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "DatasetManifest":
        base = Path(base_dir)
        classes = []
        for entry in data["classes"]:
            refs = []
            for i, s in enumerate(entry["samples"]):
                p = Path(s["path"])
                refs.append(SampleRef(p if p.is_absolute() else base / p, s.get("kind", "vector"),
                                      s.get("id", p.stem or str(i))))
            classes.append(ClassEntry(str(entry["id"]), tuple(refs)))
        return cls(tuple(classes), float(data.get("split_fraction", 0.5)))

    def to_dict(self, base_dir: str | Path | None = None) -> dict:
        def rel(p: Path) -> str:
            if base_dir is not None:
                try:
                    return p.relative_to(base_dir).as_posix()
                except ValueError:
                    pass
            return p.as_posix()

        return {
            "split_fraction": self.split_fraction,
            "classes": [
                {
                    "id": c.class_id,
                    "samples": [{"path": rel(s.path), "kind": s.kind, "id": s.sample_id} for s in c.samples],
                }
                for c in self.classes
            ],
        }


def load_manifest(path: str | Path) -> DatasetManifest:
    import json

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return DatasetManifest.from_dict(json.loads(path.read_text()), path.parent)


def split_counts(count: int, fraction: float) -> int:
    """Number of enrollment samples: ceil(fraction * count), leaving at least one to authenticate."""
    if count < 2:
        raise ValueError("a class needs at least two samples to split")
    return min(max(math.ceil(fraction * count - 1e-9), 1), count - 1)


def split_enrollment(
    manifest: DatasetManifest, seed: int
) -> dict[str, tuple[list[SampleRef], list[SampleRef]]]:
    """Seeded random enrollment / authentication split per class."""
    out = {}
    for index, entry in enumerate(manifest.classes):
        n_enroll = split_counts(len(entry.samples), manifest.split_fraction)
        rng = np.random.default_rng([seed, index])
        perm = rng.permutation(len(entry.samples))
        enroll = sorted(perm[:n_enroll].tolist())
        auth = sorted(perm[n_enroll:].tolist())
        out[entry.class_id] = ([entry.samples[i] for i in enroll], [entry.samples[i] for i in auth])
    return out


def enrollment_spectrum(spectra: Sequence[SpectrumEstimate], method: str = "arithmetic") -> SpectrumEstimate:
    """Per-bin average of a class's enrollment spectra."""
    if not spectra:
        raise ValueError("need at least one spectrum")
    n = spectra[0].n_bins
    if any(s.n_bins != n for s in spectra):
        raise ValueError("spectra are on different frequency grids")
    stack = np.vstack([s.values for s in spectra])
    if method == "arithmetic":
        return SpectrumEstimate(stack.mean(axis=0))
    if method == "geometric":
        return SpectrumEstimate(np.exp(np.log(stack).mean(axis=0)))
    raise ValueError(f"unknown averaging method {method!r}")
