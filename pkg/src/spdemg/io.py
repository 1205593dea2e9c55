"""On-disk formats: recordings, session manifests, metrics reports.

Recording file layout (all little-endian)::

    bytes 0..3    magic "SEMG"
    bytes 4..7    u32 format version (currently 1)
    bytes 8..11   u32 channel count
    bytes 12..19  u64 sample count per channel
    bytes 20..27  f64 sample rate in Hz
    bytes 28..    channel-major float32 samples (channel 0 first)

Samples are stored as float32 and promoted to float64 on load. Manifests
and metrics are UTF-8 JSON; metrics are serialized canonically (sorted
keys, fixed separators) so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import numpy as np

from .errors import FormatError, InvalidInput, UnsupportedVersion
from .signal_graph import Recording, TrialSpec

RECORDING_MAGIC = b"SEMG"
RECORDING_VERSION = 1
_REC_HEADER = struct.Struct("<4sIIQd")

DATA_ROOT_ENV = "SPDEMG_DATA_ROOT"


def write_recording(path: str | Path, rec: Recording) -> None:
    with open(path, "wb") as fh:
        fh.write(
            _REC_HEADER.pack(
                RECORDING_MAGIC,
                RECORDING_VERSION,
                rec.channels,
                rec.n_samples,
                float(rec.sample_rate),
            )
        )
        fh.write(np.ascontiguousarray(rec.samples, dtype="<f4").tobytes())


def load_recording(path: str | Path) -> Recording:
    raw = Path(path).read_bytes()
    if len(raw) < _REC_HEADER.size:
        raise FormatError(f"{path}: file too short for a recording header")
    magic, version, channels, n_samples, rate = _REC_HEADER.unpack_from(raw)
    if magic != RECORDING_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != RECORDING_VERSION:
        raise UnsupportedVersion(f"{path}: unsupported recording version {version}")
    expected = channels * n_samples * 4
    payload = raw[_REC_HEADER.size :]
    if len(payload) < expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header declares {expected}"
        )
    samples = np.frombuffer(payload[:expected], dtype="<f4").astype(np.float64)
    return Recording(rate, samples.reshape(channels, n_samples))


# ---------------------------------------------------------------------------
# manifests


@dataclass
class Manifest:
    """One recorded session: a recording file plus its labeled trials."""

    recording: str
    session_id: str
    vocabulary: Dict[str, int]
    trials: List[TrialSpec]

    def __post_init__(self) -> None:
        ids = sorted(self.vocabulary.values())
        if ids != list(range(len(ids))):
            raise InvalidInput("vocabulary class ids must be dense from 0")
        prev_end = -1
        prev_start = -1
        for t in self.trials:
            if t.label not in self.vocabulary:
                raise InvalidInput(f"trial label {t.label!r} not in vocabulary")
            if self.vocabulary[t.label] != t.class_id:
                raise InvalidInput(f"trial {t.label!r} class id disagrees with vocabulary")
            if t.start_sample < prev_start:
                raise InvalidInput("trials must be sorted by start sample")
            if t.start_sample < prev_end:
                raise InvalidInput("trials must not overlap")
            prev_start = t.start_sample
            prev_end = t.end_sample

    @property
    def n_classes(self) -> int:
        return len(self.vocabulary)

    def repetition_indices(self) -> List[int]:
        """Occurrence index of each trial among same-label trials."""
        seen: Dict[str, int] = {}
        out = []
        for t in self.trials:
            out.append(seen.get(t.label, 0))
            seen[t.label] = out[-1] + 1
        return out


def save_manifest(path: str | Path, manifest: Manifest) -> None:
    doc = {
        "recording": manifest.recording,
        "session_id": manifest.session_id,
        "vocabulary": manifest.vocabulary,
        "trials": [
            {
                "label": t.label,
                "class_id": t.class_id,
                "start_sample": t.start_sample,
                "end_sample": t.end_sample,
            }
            for t in manifest.trials
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> Manifest:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON") from exc
    try:
        trials = [
            TrialSpec(
                label=t["label"],
                class_id=t["class_id"],
                start_sample=t["start_sample"],
                end_sample=t["end_sample"],
            )
            for t in doc["trials"]
        ]
        return Manifest(
            recording=doc["recording"],
            session_id=doc["session_id"],
            vocabulary={k: int(v) for k, v in doc["vocabulary"].items()},
            trials=trials,
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing manifest field {exc}") from exc


def resolve_path(p: str | Path, relative_to: Path | None = None) -> Path:
    """Resolve a data path: absolute as-is, else against the anchor
    directory, else against the configured data root."""
    p = Path(p)
    if p.is_absolute():
        return p
    if relative_to is not None and (relative_to / p).exists():
        return relative_to / p
    root = os.environ.get(DATA_ROOT_ENV)
    if root and (Path(root) / p).exists():
        return Path(root) / p
    return p


def manifest_recording(manifest_path: str | Path, manifest: Manifest) -> Recording:
    rec_path = resolve_path(manifest.recording, Path(manifest_path).parent)
    return load_recording(rec_path)


# ---------------------------------------------------------------------------
# metrics


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def to_jsonable(obj):
    """Recursively convert numpy containers/scalars to plain Python."""
    return _to_jsonable(obj)


def dump_metrics(obj: dict) -> str:
    """Canonical JSON serialization (byte-stable across identical runs)."""
    return json.dumps(_to_jsonable(obj), sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


def write_metrics(path: str | Path, obj: dict) -> None:
    Path(path).write_text(dump_metrics(obj))
