"""HTTP backend for timed real-vs-generated judgment collection.

Serves trials of (image, duration) with the image drawn from one of four
hidden source pools; stores forced-choice responses in an append-only
line-delimited log; aggregates per-(source, duration) fractions with
inter-subject spread.  The source label never reaches the client before its
response is recorded.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import time
import uuid
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image as PILImage
from pydantic import BaseModel

from .data import denormalize_bytes

SOURCES = ("real", "gan", "lapgan", "cc-lapgan")
RESPONSES = ("real", "generated")
# 11 presentation durations, log-spaced between the endpoints.
DEFAULT_DURATIONS_MS = (50, 75, 100, 150, 200, 300, 450, 650, 1000, 1400, 2000)


@dataclass(frozen=True)
class TrialRecord:
    subject_id: str
    image_id: str
    source: str
    duration_ms: int
    response: str
    timestamp: float
    correct: bool
    reaction_ms: Optional[float] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        return cls(**json.loads(line))


def draw_trial(rng: np.random.Generator, sources: Sequence[str], durations: Sequence[int]):
    """Uniformly random (source, duration) pair."""
    return (
        sources[int(rng.integers(len(sources)))],
        int(durations[int(rng.integers(len(durations)))]),
    )


def image_data_url(img: np.ndarray) -> str:
    """PNG data URL for a (C,H,W) [-1,1] image."""
    raw = denormalize_bytes(img)
    if raw.shape[0] == 1:
        pil = PILImage.fromarray(raw[0], mode="L")
    elif raw.shape[0] == 3:
        pil = PILImage.fromarray(raw.transpose(1, 2, 0), mode="RGB")
    else:
        raise ValueError(f"cannot encode image with {raw.shape[0]} channels")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


class ResponseBody(BaseModel):
    trial_id: str
    response: str
    reaction_ms: Optional[float] = None


class EvalStore:
    """Append-only JSONL record log; one atomic write per record."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: TrialRecord) -> None:
        line = record.to_json() + "\n"
        with self._lock, open(self.path, "a") as fh:
            fh.write(line)
            fh.flush()

    def records(self) -> List[TrialRecord]:
        if not self.path.exists():
            return []
        with self._lock:
            text = self.path.read_text()
        return [TrialRecord.from_json(l) for l in text.splitlines() if l.strip()]


def aggregate_results(records: Sequence[TrialRecord]) -> List[dict]:
    """Per-(source, duration): mean of per-subject 'judged real' fractions.

    sigma is the sample standard deviation across subjects (None when fewer
    than two subjects responded in the cell).
    """
    cells: Dict[tuple, Dict[str, list]] = {}
    for r in records:
        per_subject = cells.setdefault((r.source, r.duration_ms), {})
        per_subject.setdefault(r.subject_id, []).append(1.0 if r.response == "real" else 0.0)
    out = []
    for (source, duration), per_subject in sorted(cells.items()):
        fractions = [float(np.mean(v)) for v in per_subject.values()]
        sigma = float(np.std(fractions, ddof=1)) if len(fractions) >= 2 else None
        out.append(
            {
                "source": source,
                "duration_ms": duration,
                "fraction_real": float(np.mean(fractions)),
                "sigma": sigma,
                "n_subjects": len(fractions),
                "n_trials": int(sum(len(v) for v in per_subject.values())),
            }
        )
    return out


def create_app(
    images: Dict[str, Sequence[np.ndarray]],
    store_path,
    durations: Sequence[int] = DEFAULT_DURATIONS_MS,
    seed: Optional[int] = None,
    mask: Optional[np.ndarray] = None,
):
    """FastAPI app. ``images`` maps source name -> list of (C,H,W) images."""
    from fastapi import FastAPI, HTTPException

    unknown = set(images) - set(SOURCES)
    if unknown:
        raise ValueError(f"unknown sources {sorted(unknown)}")
    sources = tuple(s for s in SOURCES if s in images)
    if not sources:
        raise ValueError(f"need at least one image source out of {SOURCES}")
    for s in sources:
        if len(images[s]) == 0:
            raise ValueError(f"source {s!r} has no images")

    # Pre-encode every image once; trials then serve cached payloads.
    encoded = {s: [image_data_url(img) for img in images[s]] for s in sources}
    if mask is None:
        shape = np.asarray(images[sources[0]][0]).shape
        mask = np.zeros(shape, dtype=np.float32)  # mid-gray after byte mapping
    mask_url = image_data_url(mask)

    rng = np.random.default_rng(seed)
    pending: Dict[str, dict] = {}
    answered: set = set()
    store = EvalStore(store_path)
    lock = threading.Lock()

    app = FastAPI(title="real-vs-generated judgment harness")

    @app.get("/trial")
    def get_trial(subject_id: str = "anon"):
        with lock:
            source, duration = draw_trial(rng, sources, durations)
            idx = int(rng.integers(len(encoded[source])))
            trial_id = uuid.uuid4().hex
            pending[trial_id] = {
                "subject_id": subject_id,
                "source": source,
                "duration_ms": duration,
                "image_id": f"{source}/{idx}",
            }
        return {
            "trial_id": trial_id,
            "image": encoded[source][idx],
            "duration_ms": duration,
        }

    @app.get("/mask")
    def get_mask():
        return {"image": mask_url}

    @app.post("/response")
    def post_response(body: ResponseBody):
        if body.response not in RESPONSES:
            raise HTTPException(422, f"response must be one of {RESPONSES}")
        with lock:
            if body.trial_id in answered:
                raise HTTPException(409, "trial already answered")
            trial = pending.get(body.trial_id)
            if trial is None:
                raise HTTPException(404, "unknown trial")
            answered.add(body.trial_id)
            del pending[body.trial_id]
        record = TrialRecord(
            subject_id=trial["subject_id"],
            image_id=trial["image_id"],
            source=trial["source"],
            duration_ms=trial["duration_ms"],
            response=body.response,
            timestamp=time.time(),
            correct=(body.response == "real") == (trial["source"] == "real"),
            reaction_ms=body.reaction_ms,
        )
        store.append(record)
        return {"stored": True, "correct": record.correct}

    @app.get("/results")
    def get_results():
        return {"cells": aggregate_results(store.records()), "durations": list(durations)}

    @app.get("/export")
    def get_export():
        return {"records": [asdict(r) for r in store.records()]}

    return app
