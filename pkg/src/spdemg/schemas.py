"""Request/response models for the service API.

Paths in requests refer to the filesystem of the machine running the
service. Every endpoint validates its payload through these models, and
the CLI reuses them so local and remote invocations share one contract.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from .experiment import ExperimentConfig


class WindowModel(BaseModel):
    mode: str = "whole-trial"
    context: float = 1.5
    step: Optional[float] = None


class SplitModel(BaseModel):
    kind: str = "by-repetition-index"
    train_repetitions: int = 3
    train_sessions: List[str] = Field(default_factory=list)


class ExperimentConfigModel(BaseModel):
    window: WindowModel = Field(default_factory=WindowModel)
    eta: float = 0.1
    center: bool = True
    model: str = "mdm"
    model_config_values: Dict = Field(default_factory=dict, alias="model_config")
    split: SplitModel = Field(default_factory=SplitModel)
    seed: int = 0
    bandpass: bool = False
    notch: bool = False

    model_config = {"populate_by_name": True, "protected_namespaces": ()}

    def to_config(self, seed_override: Optional[int] = None) -> ExperimentConfig:
        doc = {
            "window": self.window.model_dump(),
            "eta": self.eta,
            "center": self.center,
            "model": self.model,
            "model_config": self.model_config_values,
            "split": self.split.model_dump(),
            "seed": self.seed if seed_override is None else seed_override,
            "bandpass": self.bandpass,
            "notch": self.notch,
        }
        return ExperimentConfig.from_dict(doc)


class HealthResponse(BaseModel):
    status: str
    version: str


class IngestRequest(BaseModel):
    output_dir: str
    source: Optional[str] = None
    demo: bool = False
    seed: int = 0


class IngestResponse(BaseModel):
    recordings: List[str]
    manifests: List[str]


class ValidateRequest(BaseModel):
    recording: Optional[str] = None
    manifest: Optional[str] = None


class ValidateResponse(BaseModel):
    ok: bool
    detail: Dict


class RunRequest(BaseModel):
    config: ExperimentConfigModel
    manifests: List[str]
    output: Optional[str] = None
    checkpoint_out: Optional[str] = None
    seed: Optional[int] = None


class RunResponse(BaseModel):
    metrics: Dict
    output: Optional[str] = None
    checkpoint: Optional[str] = None


class ExportDistancesRequest(BaseModel):
    config: ExperimentConfigModel = Field(default_factory=ExperimentConfigModel)
    manifests: List[str]
    output: str


class ExportDistancesResponse(BaseModel):
    distances: str
    labels: str
    count: int


class TrainRequest(BaseModel):
    config: ExperimentConfigModel
    manifests: List[str]
    checkpoint_out: str
    output: Optional[str] = None
    seed: Optional[int] = None


class EvalRequest(BaseModel):
    checkpoint: str
    manifests: List[str]
    config: ExperimentConfigModel = Field(default_factory=ExperimentConfigModel)
    output: Optional[str] = None


class DiagRatioRequest(BaseModel):
    checkpoint: str
    manifests: List[str]
    config: ExperimentConfigModel = Field(default_factory=ExperimentConfigModel)
    csv_out: Optional[str] = None


class BasisAngleRequest(BaseModel):
    checkpoints: List[str]
    csv_out: Optional[str] = None


class ImportanceRequest(BaseModel):
    checkpoint: str
    manifests: List[str]
    config: ExperimentConfigModel = Field(default_factory=ExperimentConfigModel)
    csv_out: Optional[str] = None
    per_trial_column: bool = False


class CollapseRequest(BaseModel):
    metrics: str


class AnalysisResponse(BaseModel):
    result: Dict
