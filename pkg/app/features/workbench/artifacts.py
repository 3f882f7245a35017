"""Workbench Feature - Run artifacts on disk"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.features.activations.models import PathChoice
from app.features.energy.models import LayerEnergyTerms
from app.features.workbench.models import MetricsRecord
from app.shared.exceptions import ArtifactNotFoundError, ValidationError


logger = logging.getLogger("macam_workbench")

ASSIGNMENT_FILE = "assignment.json"
ENERGY_REPORT_FILE = "energy_report.csv"


def write_assignment(path: Union[str, Path], paths: Sequence[np.ndarray]) -> Path:
    """Persist per-layer channel->path arrays as JSON lists of "analog"/"digital"."""
    path = Path(path)
    layers = [[PathChoice(int(p)).label for p in layer] for layer in paths]
    path.write_text(json.dumps({"layers": layers}, indent=2))
    return path


def read_assignment(path: Union[str, Path]) -> List[np.ndarray]:
    """
    Load an assignment file into per-layer path-index arrays.

    Raises:
        ArtifactNotFoundError: If the file does not exist
        ValidationError: If an entry is neither "analog" nor "digital"
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(f"Assignment file not found: {path} (run `search` first)")
    try:
        layers = json.loads(path.read_text())["layers"]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ValidationError(f"Malformed assignment file {path}: {e}")

    by_label = {choice.label: choice.value for choice in PathChoice}
    result = []
    for i, layer in enumerate(layers):
        unknown = sorted({entry for entry in layer if entry not in by_label})
        if unknown:
            raise ValidationError(f"Assignment layer {i}: unknown paths {unknown}")
        result.append(np.array([by_label[entry] for entry in layer], dtype=np.int64))
    return result


class RunArtifacts:
    """Files of one run directory: metrics stream, summaries, assignment, reports, checkpoint"""

    def __init__(self, out_dir: Union[str, Path], stream: str = "run"):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.stream = stream

    @property
    def metrics_path(self) -> Path:
        return self.out_dir / f"{self.stream}_metrics.jsonl"

    @property
    def assignment_path(self) -> Path:
        return self.out_dir / ASSIGNMENT_FILE

    def checkpoint_path(self, phase: str) -> Path:
        return self.out_dir / f"{phase}_checkpoint.npz"

    def summary_path(self, name: str) -> Path:
        return self.out_dir / f"{name}_summary.json"

    def reset_metrics(self) -> None:
        self.metrics_path.unlink(missing_ok=True)

    def append_metrics(self, record: MetricsRecord) -> None:
        with self.metrics_path.open("a") as f:
            f.write(record.model_dump_json() + "\n")

    def read_metrics(self) -> List[MetricsRecord]:
        if not self.metrics_path.is_file():
            return []
        lines = self.metrics_path.read_text().splitlines()
        return [MetricsRecord.model_validate_json(line) for line in lines if line.strip()]

    def write_summary(self, name: str, summary: Union[BaseModel, Dict]) -> Path:
        payload = summary.model_dump(mode="json") if isinstance(summary, BaseModel) else summary
        path = self.summary_path(name)
        path.write_text(json.dumps(payload, indent=2))
        logger.info(f"Wrote {path}")
        return path

    def write_assignment(self, paths: Sequence[np.ndarray]) -> Path:
        path = write_assignment(self.assignment_path, paths)
        logger.info(f"Wrote assignment to {path}")
        return path

    def write_energy_report(self, rows: Sequence[LayerEnergyTerms]) -> Path:
        path = self.out_dir / ENERGY_REPORT_FILE
        pd.DataFrame([row.model_dump() for row in rows]).to_csv(path, index=False)
        logger.info(f"Wrote energy report to {path}")
        return path

    def save_checkpoint(self, phase: str, state: Dict[str, np.ndarray]) -> Path:
        path = self.checkpoint_path(phase)
        np.savez(path, **state)
        return path

    def load_checkpoint(self, phase: str) -> Dict[str, np.ndarray]:
        """
        Raises:
            ArtifactNotFoundError: If `phase` left no checkpoint in the run directory
        """
        path = self.checkpoint_path(phase)
        if not path.is_file():
            raise ArtifactNotFoundError(f"No {phase} checkpoint in {self.out_dir} (run `{phase}` first)")
        with np.load(path) as data:
            return {key: data[key] for key in data.files}
