"""Serialization of tables, shot sets and run manifests."""

import csv
import hashlib
import json
import math
import os
import tempfile

import numpy as np

from .errors import InternalConsistencyError
from .readout import ShotSet

SHOT_COLUMNS = ("I_m", "Q_m")
TOMO_COLUMNS = ("tomo_axis", "tomo_outcome")


def fmt(v):
    """Round-trippable, platform-independent text for a scalar."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else v
    return v


def dumps_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def table_text(columns, rows, format="csv"):
    rows = [tuple(r) for r in rows]
    for r in rows:
        if len(r) != len(columns):
            raise InternalConsistencyError(f"row has {len(r)} fields for {len(columns)} columns")
    if format == "json":
        return dumps_json([{c: v for c, v in zip(columns, r)} for r in rows])
    lines = [",".join(columns)]
    lines.extend(",".join(fmt(v) for v in r) for r in rows)
    return "\n".join(lines) + "\n"


def write_table(path, columns, rows, format="csv"):
    atomic_write(path, table_text(columns, rows, format))


def validate_table(path, columns, n_rows, format="csv"):
    """Re-read a written table and check its header, row count and field types."""
    if format == "json":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if len(data) != n_rows or any(set(row) != set(columns) for row in data):
            raise InternalConsistencyError(f"{path}: JSON table does not match its schema")
        return
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != tuple(columns):
            raise InternalConsistencyError(f"{path}: header {header} != schema {list(columns)}")
        count = 0
        for row in reader:
            count += 1
            if len(row) != len(columns):
                raise InternalConsistencyError(f"{path}:{count + 1}: wrong number of fields")
    if count != n_rows:
        raise InternalConsistencyError(f"{path}: {count} rows written, {n_rows} expected")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_shots_csv(path, shots):
    """Columns ``I_m, Q_m`` plus ``tomo_axis, tomo_outcome`` when outcomes exist."""
    if shots.outcome is not None:
        cols = SHOT_COLUMNS + TOMO_COLUMNS
        rows = zip(shots.i, shots.q, shots.axis, shots.outcome)
    else:
        cols = SHOT_COLUMNS
        rows = zip(shots.i, shots.q)
    write_table(path, cols, rows)
    return cols


def read_shots_csv(path, seed=0, label=""):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        rows = list(reader)
    if header[:2] != SHOT_COLUMNS:
        raise InternalConsistencyError(f"{path}: not a shot file (header {header})")
    records = np.array([[float(r[0]), float(r[1])] for r in rows]).reshape(-1, 2)
    if header == SHOT_COLUMNS + TOMO_COLUMNS:
        axis = np.array([r[2] for r in rows])
        outcome = np.array([int(r[3]) for r in rows], dtype=np.int8)
        return ShotSet(records, seed, label, axis, outcome)
    return ShotSet(records, seed, label)
