"""Best-effort import of external data into the native formats.

The converter deliberately supports only a simple documented layout and
never guesses at upstream directory structures: a source directory must
contain one or more ``<name>.npy`` arrays (channel-major float samples)
each paired with a ``<name>.trials.json`` sidecar::

    {
      "sample_rate": 5000.0,
      "session_id": "subject1-session1",
      "vocabulary": {"label": 0, ...},
      "trials": [
        {"label": "...", "class_id": 0, "start_sample": 0, "end_sample": 7500},
        ...
      ]
    }

Each pair becomes a recording file plus manifest in the output directory.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List

import numpy as np

from .errors import FormatError
from .io import Manifest, save_manifest, write_recording
from .signal_graph import Recording, TrialSpec


def convert_source_dir(source: str | Path, out_dir: str | Path) -> Dict:
    source = Path(source)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = sorted(source.glob("*.npy"))
    if not arrays:
        raise FormatError(f"{source}: no .npy arrays found")
    manifests: List[str] = []
    recordings: List[str] = []
    for arr_path in arrays:
        sidecar = arr_path.with_suffix("").with_suffix(".trials.json")
        if not sidecar.exists():
            sidecar = arr_path.parent / (arr_path.stem + ".trials.json")
        if not sidecar.exists():
            raise FormatError(f"{arr_path}: missing trials sidecar {sidecar.name}")
        try:
            doc = json.loads(sidecar.read_text())
            samples = np.load(arr_path)
            rec = Recording(float(doc["sample_rate"]), samples)
            trials = [
                TrialSpec(
                    label=t["label"],
                    class_id=int(t["class_id"]),
                    start_sample=int(t["start_sample"]),
                    end_sample=int(t["end_sample"]),
                )
                for t in doc["trials"]
            ]
            manifest = Manifest(
                recording=arr_path.stem + ".semg",
                session_id=str(doc["session_id"]),
                vocabulary={k: int(v) for k, v in doc["vocabulary"].items()},
                trials=trials,
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise FormatError(f"{arr_path}: cannot convert ({exc})") from exc
        rec_path = out_dir / (arr_path.stem + ".semg")
        man_path = out_dir / (arr_path.stem + ".manifest.json")
        write_recording(rec_path, rec)
        save_manifest(man_path, manifest)
        recordings.append(str(rec_path))
        manifests.append(str(man_path))
    return {"recordings": recordings, "manifests": manifests}
