"""
Utility functions for kdvlimit
Atomic artifact writes, versioned CSV tables, digests and run directories
"""
import csv
import hashlib
import io
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np

SCHEMA_PREFIX = "#schema="
FAILED_MARKER = "FAILED"

PathLike = Union[str, Path]


def _to_builtin(value: Any) -> Any:
    """Convert numpy scalars and arrays so json can serialize them"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write through a temporary sibling and rename it into place"""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    return path


def save_to_json(data: Dict[str, Any], filename: PathLike) -> Path:
    """Save the data to a JSON file"""
    path = atomic_write_text(filename, json.dumps(data, indent=4, default=_to_builtin) + "\n")
    logging.info(f"Wrote {path}")
    return path


def canonical_json(data: Mapping[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_to_builtin)


def fingerprint(data: Mapping[str, Any], length: int = 12) -> str:
    """Leading hex digits of the sha256 of the canonical JSON form"""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()[:length]


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            h.update(chunk)
    return h.hexdigest()


def format_value(value: Any) -> str:
    """CSV cell text; floats keep 17 significant digits so they parse back exactly"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def write_csv(path: PathLike, artifact: str, header: Sequence[str], rows: Iterable[Sequence[Any]],
              version: int = 1) -> Path:
    """Write a CSV table behind a '#schema=kdvlimit.<artifact>/<version>' line"""
    buffer = io.StringIO()
    buffer.write(f"{SCHEMA_PREFIX}kdvlimit.{artifact}/{version}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    count = 0
    for row in rows:
        writer.writerow([format_value(v) for v in row])
        count += 1
    path = atomic_write_text(path, buffer.getvalue())
    logging.info(f"Wrote {count} rows to {path}")
    return path


def write_dict_csv(path: PathLike, artifact: str, records: Sequence[Mapping[str, Any]],
                   header: Sequence[str] = None, version: int = 1) -> Path:
    if header is None:
        header = list(records[0].keys()) if records else []
    return write_csv(path, artifact, header, ([r.get(h) for h in header] for r in records), version)


def read_csv(path: PathLike) -> Tuple[str, List[str], List[List[str]]]:
    """Return (schema, header, rows) of a table written by write_csv"""
    with open(path, "r", encoding="utf-8", newline="") as f:
        first = f.readline().rstrip("\n")
        if not first.startswith(SCHEMA_PREFIX):
            raise ValueError(f"{path} does not start with a schema line")
        reader = csv.reader(f)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path} has no header row")
    return first[len(SCHEMA_PREFIX):], rows[0], rows[1:]


def csv_body(path: PathLike) -> str:
    """File contents after the schema line"""
    with open(path, "r", encoding="utf-8") as f:
        f.readline()
        return f.read()


def make_run_dir(output_dir: PathLike, subcommand: str, config: Mapping[str, Any]) -> Path:
    """Create <output_dir>/<subcommand>-<fingerprint>, adding -rN when it already exists"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    base = f"{subcommand}-{fingerprint(config)}"
    candidate = output_dir / base
    attempt = 1
    while candidate.exists():
        candidate = output_dir / f"{base}-r{attempt}"
        attempt += 1
    candidate.mkdir()
    logging.info(f"Run directory: {candidate}")
    return candidate


def write_failed_marker(run_dir: PathLike, message: str) -> Path:
    return atomic_write_text(Path(run_dir) / FAILED_MARKER, message.rstrip("\n") + "\n")
