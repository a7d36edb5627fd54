"""
Report Service Module
Atomic CSV/JSON writers and the run manifest emitted by every CLI run.
"""

import csv
import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from services.logging_service import logger

TOOL_VERSION = '1.0.0'


def format_cell(value: Any) -> str:
    """Floats with 17 significant digits, everything else as text."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    return str(value)


def _atomic_write(path: str, write) -> str:
    path = os.path.abspath(path)
    directory = os.path.dirname(path)
    if not os.path.isdir(directory):
        raise OSError(f"Output directory does not exist: {directory}")
    handle = tempfile.NamedTemporaryFile('w', dir=directory, delete=False, encoding='utf-8', newline='',
                                         prefix='.tmp-', suffix=os.path.splitext(path)[1])
    try:
        with handle:
            write(handle)
        os.replace(handle.name, path)
    except BaseException:
        if os.path.exists(handle.name):
            os.unlink(handle.name)
        raise
    return path


def write_csv_atomic(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    def write(handle):
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    written = _atomic_write(path, write)
    logger.info(f"📄 Wrote {written}")
    return written


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return {'re': value.real, 'im': value.imag}
    return value


def write_json_atomic(path: str, payload: Dict[str, Any]) -> str:
    def write(handle):
        json.dump(_jsonable(payload), handle, indent=2, sort_keys=True)
        handle.write('\n')
    return _atomic_write(path, write)


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, 'r', encoding='utf-8', newline='') as handle:
        return list(csv.DictReader(handle))


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    overrides: Dict[str, Any] = field(default_factory=dict)
    rng_seed: Optional[int] = None
    tool_version: str = TOOL_VERSION
    outputs: List[str] = field(default_factory=list)
    wall_time: float = 0.0
    started_at: float = field(default_factory=time.perf_counter, repr=False)

    def add_output(self, path: str) -> None:
        self.outputs.append(os.path.abspath(path))

    def finish(self) -> 'RunManifest':
        self.wall_time = time.perf_counter() - self.started_at
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop('started_at')
        return data

    def write(self, path: str) -> str:
        return write_json_atomic(path, self.to_dict())


def manifest_path(out: str) -> str:
    if os.path.isdir(out):
        return os.path.join(out, 'manifest.json')
    root, _ = os.path.splitext(out)
    return root + '.manifest.json'


def sidecar_path(out: str, name: str = 'summary', ext: str = 'json') -> str:
    root, _ = os.path.splitext(out)
    return f"{root}.{name}.{ext}"
