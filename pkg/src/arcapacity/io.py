"""File formats: AR model JSON, signal vectors (binary / CSV), pair-score CSV."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ar import ArModel, SignalVector

_LENGTH = struct.Struct("<Q")


def save_model(model: ArModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def load_model(path: str | Path) -> ArModel:
    return ArModel.from_dict(json.loads(Path(path).read_text()))


def encode_vector(samples: np.ndarray) -> bytes:
    """8-byte little-endian unsigned length followed by little-endian float64 samples."""
    samples = np.asarray(samples, dtype="<f8").reshape(-1)
    return _LENGTH.pack(samples.size) + samples.tobytes()


def decode_vector(blob: bytes) -> np.ndarray:
    if len(blob) < _LENGTH.size:
        raise ValueError("truncated vector file: missing length header")
    (n,) = _LENGTH.unpack_from(blob)
    payload = blob[_LENGTH.size:]
    if len(payload) != 8 * n:
        raise ValueError(f"vector file declares {n} samples but carries {len(payload) // 8}")
    return np.frombuffer(payload, dtype="<f8").astype(float)


def save_vector(x: SignalVector | np.ndarray, path: str | Path) -> None:
    path = Path(path)
    samples = x.samples if isinstance(x, SignalVector) else np.asarray(x, dtype=float)
    if path.suffix.lower() == ".csv":
        path.write_text("".join(f"{v!r}\n" for v in samples.tolist()))
    else:
        path.write_bytes(encode_vector(samples))


def load_vector(path: str | Path, class_id: str = "", sample_id: str = "") -> SignalVector:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        values = [float(line) for line in path.read_text().split() if line.strip()]
        samples = np.asarray(values, dtype=float)
    else:
        samples = decode_vector(path.read_bytes())
    return SignalVector(samples, class_id or path.parent.name, sample_id or path.stem)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: str | Path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())
