"""Windowing of multichannel recordings and SPD edge-matrix construction.

Channels are graph vertices; the edge matrix of a window is the Gram
matrix of the (optionally mean-centered) channel signals, which is
symmetric PSD by construction and becomes SPD after trace regularization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.signal

from .errors import InvalidInput, WindowTooLong
from .linalg import sym


@dataclass
class Recording:
    """Raw multichannel signal.

    ``samples`` is channel-major, shape (channels, n_samples), float64.
    """

    sample_rate: float
    samples: np.ndarray

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1 or self.samples.shape[1] < 1:
            raise InvalidInput(f"samples must be channels x n, got {self.samples.shape}")
        if self.sample_rate <= 0:
            raise InvalidInput("sample rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInput("recording contains non-finite samples")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class TrialSpec:
    """One labeled articulation interval inside a recording."""

    label: str
    class_id: int
    start_sample: int
    end_sample: int

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise InvalidInput("class_id must be non-negative")
        if not (0 <= self.start_sample < self.end_sample):
            raise InvalidInput(
                f"bad trial window [{self.start_sample}, {self.end_sample})"
            )


@dataclass(frozen=True)
class WindowSpec:
    """How trials are cut into analysis windows.

    ``whole-trial`` yields a single block spanning the trial; ``sliding``
    yields left-aligned blocks of ``context`` seconds every ``step``
    seconds, with no padding.
    """

    mode: str = "whole-trial"
    context: float = 1.5
    step: float | None = field(default=None)

    def __post_init__(self) -> None:
        if self.mode not in ("whole-trial", "sliding"):
            raise InvalidInput(f"unknown window mode {self.mode!r}")
        if self.context <= 0:
            raise InvalidInput("context must be positive")
        if self.mode == "sliding":
            if self.step is None or not (0 < self.step <= self.context):
                raise InvalidInput("sliding windows need 0 < step <= context")


def extract_windows(
    rec: Recording, trial: TrialSpec, spec: WindowSpec
) -> List[np.ndarray]:
    """Cut a trial into channel x width sample blocks.

    Window widths in samples are ``round(seconds * sample_rate)``. In
    sliding mode a trial of T samples yields ``(T - w) // s + 1`` blocks.

    Raises
    ------
    WindowTooLong
        In sliding mode, when the trial is shorter than one context window.
    """
    if trial.end_sample > rec.n_samples:
        raise InvalidInput("trial extends beyond the recording")
    block = rec.samples[:, trial.start_sample : trial.end_sample]
    if spec.mode == "whole-trial":
        return [block]
    w = int(round(spec.context * rec.sample_rate))
    s = int(round(spec.step * rec.sample_rate))
    if w < 1 or s < 1:
        raise InvalidInput("window/step shorter than one sample")
    T = block.shape[1]
    if T < w:
        raise WindowTooLong(f"trial of {T} samples is shorter than context {w}")
    count = (T - w) // s + 1
    return [block[:, k * s : k * s + w] for k in range(count)]


def edge_matrix(block: np.ndarray, center: bool = True) -> np.ndarray:
    """Gram matrix of the windowed channel signals (symmetric PSD).

    ``e_ij`` is the inner product of channels i and j over the window,
    after per-channel mean removal when ``center`` is set (the default;
    disable it to keep the plain inner product). No normalization by the
    window length is applied.
    """
    X = np.asarray(block, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise InvalidInput(f"expected channels x w with w >= 2, got {X.shape}")
    if center:
        X = X - X.mean(axis=1, keepdims=True)
    return sym(X @ X.T)


def regularize(E: np.ndarray, eta: float) -> np.ndarray:
    """Shift a PSD edge matrix to SPD: ``(1 - eta) E + eta trace(E) I``.

    ``eta`` must lie in [0, 1); ``eta = 0`` returns the input unchanged
    bit-for-bit. For PSD input with positive trace and ``eta > 0`` the
    output is SPD.
    """
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {E.shape}")
    if not (0.0 <= eta < 1.0):
        raise InvalidInput(f"eta must be in [0, 1), got {eta}")
    if eta == 0.0:
        return E.copy()
    return (1.0 - eta) * E + eta * np.trace(E) * np.eye(E.shape[0])


def bandpass_filter(
    rec: Recording, low_hz: float = 10.0, high_hz: float = 1000.0, order: int = 4
) -> Recording:
    """Zero-phase Butterworth band-pass applied per channel.

    Off by default in every pipeline; raw signals are the primary path.
    """
    nyq = rec.sample_rate / 2.0
    if not (0 < low_hz < high_hz < nyq):
        raise InvalidInput("band edges must satisfy 0 < low < high < Nyquist")
    sos = scipy.signal.butter(order, [low_hz / nyq, high_hz / nyq], btype="band", output="sos")
    return Recording(rec.sample_rate, scipy.signal.sosfiltfilt(sos, rec.samples, axis=1))


def notch_filter(rec: Recording, freq_hz: float = 60.0, quality: float = 30.0) -> Recording:
    """Zero-phase mains notch applied per channel (off by default)."""
    if not (0 < freq_hz < rec.sample_rate / 2.0):
        raise InvalidInput("notch frequency must be below Nyquist")
    b, a = scipy.signal.iirnotch(freq_hz, quality, fs=rec.sample_rate)
    return Recording(rec.sample_rate, scipy.signal.filtfilt(b, a, rec.samples, axis=1))
