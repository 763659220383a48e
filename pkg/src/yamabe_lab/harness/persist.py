"""Records tables and checkpoints.

Records are comma-separated with a fixed header; floats are written with
``repr`` (shortest round-trip form) and undefined values as ``NA``.
Checkpoints are ``key = value`` text with every float in ``float.hex`` form,
so reloading is bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..conformal import UNDEFINED, Chart, ConformalField, is_undefined
from ..errors import YamabeLabError
from ..monitors import MonitorRecord

NA = "NA"
CHECKPOINT_FORMAT = "yamabe-lab-checkpoint 1"


class RecordsFormatError(YamabeLabError):
    pass


def format_value(x: float) -> str:
    return NA if is_undefined(x) else repr(float(x))


def parse_value(token: str) -> float:
    token = token.strip()
    return UNDEFINED if token == NA else float(token)


def records_text(records) -> str:
    lines = [",".join(MonitorRecord.columns())]
    for r in records:
        lines.append(",".join(format_value(getattr(r, c)) for c in MonitorRecord.columns()))
    return "\n".join(lines) + "\n"


def write_records(path, records):
    Path(path).write_text(records_text(records))


def read_records(path) -> list:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise RecordsFormatError(f"{path}: empty records file")
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != MonitorRecord.columns():
        raise RecordsFormatError(f"{path}: unexpected header {lines[0]!r}")
    out = []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise RecordsFormatError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            out.append(MonitorRecord(*(parse_value(p) for p in parts)))
        except ValueError as exc:
            raise RecordsFormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def _hex(x: float) -> str:
    return NA if is_undefined(x) else float(x).hex()


def _unhex(s: str) -> float:
    return UNDEFINED if s == NA else float.fromhex(s)


@dataclass
class Checkpoint:
    field: ConformalField
    dt: float
    step_index: int
    cfl_safety: float
    blow_threshold: float
    eps0: float
    delta: float
    gap0: float
    record_count: int


_FLOATS = ("h", "extent", "ghost_offset", "t", "dt", "cfl_safety", "blow_threshold", "eps0", "delta", "gap0")


def write_checkpoint(path, ck: Checkpoint):
    f = ck.field
    meta = {
        "n": str(f.n),
        "chart": f.chart.value,
        "N": str(f.N),
        "outer_bc": f.outer_bc,
        "step_index": str(ck.step_index),
        "record_count": str(ck.record_count),
        "h": _hex(f.h),
        "extent": _hex(f.extent),
        "ghost_offset": _hex(f.ghost_offset),
        "t": _hex(f.t),
        "dt": _hex(ck.dt),
        "cfl_safety": _hex(ck.cfl_safety),
        "blow_threshold": "inf" if math.isinf(ck.blow_threshold) else _hex(ck.blow_threshold),
        "eps0": _hex(ck.eps0),
        "delta": _hex(ck.delta),
        "gap0": _hex(ck.gap0),
    }
    lines = [f"format = {CHECKPOINT_FORMAT}"]
    lines += [f"{k} = {v}" for k, v in meta.items()]
    lines.append("phi")
    lines += [float(v).hex() for v in f.phi]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_checkpoint(path) -> Checkpoint:
    path = Path(path)
    lines = path.read_text().splitlines()
    try:
        split = lines.index("phi")
    except ValueError:
        raise RecordsFormatError(f"{path}: no phi section") from None
    meta = {}
    for line in lines[:split]:
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise RecordsFormatError(f"{path}: not a checkpoint file")
    try:
        phi = np.array([float.fromhex(s) for s in lines[split + 1:] if s.strip()])
        fl = {k: (math.inf if meta[k] == "inf" else _unhex(meta[k])) for k in _FLOATS}
        field = ConformalField(
            int(meta["n"]), Chart.parse(meta["chart"]), fl["h"], fl["extent"], phi,
            fl["t"], meta["outer_bc"], fl["ghost_offset"],
        )
        if field.N != int(meta["N"]):
            raise RecordsFormatError(f"{path}: node count does not match N")
        return Checkpoint(field, fl["dt"], int(meta["step_index"]), fl["cfl_safety"],
                          fl["blow_threshold"], fl["eps0"], fl["delta"], fl["gap0"],
                          int(meta["record_count"]))
    except (KeyError, ValueError) as exc:
        raise RecordsFormatError(f"{path}: malformed checkpoint ({exc})") from exc
