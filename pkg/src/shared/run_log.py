import json
import logging
import os
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.json"
RESULT_NAME = "result.json"
TRACE_NAME = "trace.csv"


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def format_value(value) -> str:
    """CSV cell text; floats keep full precision so reruns compare byte for byte"""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Sequence],
              comment: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_value(value) for value in row))
    path.write_text("\n".join(lines) + "\n")
    return path


class RunConfig(BaseModel):
    """Everything needed to reproduce one run; echoed verbatim as config.json"""

    subcommand: str
    out_dir: str
    seed: int = Field(ge=0)
    preset: Optional[str] = None
    paths: Dict[str, Optional[str]] = Field(default_factory=dict)
    hyperparameters: Dict[str, Any] = Field(default_factory=dict)


class RunLogService:
    """Bookkeeping for one output directory: config echo, traces and the final result"""

    def __init__(self, out_dir: Union[str, Path], run_type: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.run_type = run_type
        self.started_at: Optional[str] = None
        self._clock: Optional[float] = None
        self.record: Dict = {}

    def create_log(self, config: RunConfig) -> Path:
        """Write config.json and mark the run as running"""
        self.started_at = datetime.now().isoformat()
        self._clock = time.perf_counter()
        path = self.out_dir / CONFIG_NAME
        path.write_text(json.dumps(config.model_dump(), indent=2, sort_keys=True, default=_json_default) + "\n")
        self.record = {
            "run_type": self.run_type,
            "status": "running",
            "started_at": self.started_at,
            "pid": os.getpid(),
        }
        logger.info("Started %s run in %s", self.run_type, self.out_dir)
        return path

    def write_trace(self, columns: Sequence[str], rows: Iterable[Sequence],
                    name: str = TRACE_NAME, comment: Optional[str] = None) -> Path:
        return write_csv(self.out_dir / name, columns, rows, comment)

    def update_log(self, status: Optional[str] = None, message: Optional[str] = None,
                   error_message: Optional[str] = None, **fields) -> Dict:
        """Merge fields into result.json; completed/failed also stamp the end time"""
        self.record.update(fields)
        if status:
            self.record["status"] = status
            if status in ("completed", "failed"):
                self.record["completed_at"] = datetime.now().isoformat()
                if self._clock is not None:
                    self.record["elapsed_seconds"] = time.perf_counter() - self._clock
        if message:
            self.record["message"] = message
        if error_message:
            self.record["error_message"] = error_message

        path = self.out_dir / RESULT_NAME
        path.write_text(json.dumps(self.record, indent=2, sort_keys=True, default=_json_default) + "\n")
        return self.record


def list_runs(root: Union[str, Path]) -> List[Dict]:
    """result.json records of every run directory directly under root"""
    root = Path(root)
    if not root.is_dir():
        return []
    records = []
    for child in sorted(root.iterdir()):
        path = child / RESULT_NAME
        if path.exists():
            records.append(json.loads(path.read_text()))
    return records
