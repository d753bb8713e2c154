"""Plain-text persistence: OBJ meshes, CONFIMM1 field files, CSV logs, reports."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ParseError
from .geometry import GridTorusMap, MetricField, SymmetricTensorField

MAGIC = "CONFIMM1"
FIELD_WIDTH = {"metric": 3, "map": 3, "chart": 2, "scalar": 1}


def fmt(x: float) -> str:
    """Shortest round-trip text for a float; -0 prints as 0."""
    x = float(x)
    if x == 0:
        return "0"
    return repr(x)


# --- OBJ ------------------------------------------------------------------------


def write_obj(path, f: GridTorusMap) -> None:
    n = f.n
    lines = [f"# torus grid {n} x {n}"]
    pts = f.values.reshape(-1, 3)
    lines += [f"v {fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in pts]
    lines += [f"vt {fmt(j / n)} {fmt(k / n)}" for j in range(n) for k in range(n)]
    for j in range(n):
        for k in range(n):
            quad = (j * n + k, ((j + 1) % n) * n + k, ((j + 1) % n) * n + (k + 1) % n, j * n + (k + 1) % n)
            lines.append("f " + " ".join(f"{q + 1}/{q + 1}" for q in quad))
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> GridTorusMap:
    verts = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError("vertex needs three coordinates", lineno)
            try:
                verts.append([float(p) for p in parts[1:4]])
            except ValueError:
                raise ParseError(f"bad vertex coordinate in {raw!r}", lineno) from None
        elif parts[0] not in ("vt", "vn", "f", "o", "g", "s"):
            raise ParseError(f"unknown record {parts[0]!r}", lineno)
    n = int(round(math.sqrt(len(verts))))
    if n * n != len(verts) or n == 0:
        raise ParseError(f"{len(verts)} vertices do not form a square grid")
    return GridTorusMap(np.array(verts).reshape(n, n, 3))


# --- field files ----------------------------------------------------------------


def write_field(path, tag: str, data: np.ndarray) -> None:
    if tag not in FIELD_WIDTH:
        raise ValueError(f"unknown field type {tag!r}")
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    rows = data.reshape(n * n, -1)
    if rows.shape[1] != FIELD_WIDTH[tag]:
        raise ValueError(f"{tag} rows need {FIELD_WIDTH[tag]} values")
    lines = [MAGIC, f"n {n}", f"type {tag}"]
    lines += [" ".join(fmt(x) for x in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def write_metric(path, g: SymmetricTensorField) -> None:
    write_field(path, "metric", np.stack([g.E, g.F, g.G], axis=-1))


def read_field(path) -> Tuple[str, np.ndarray]:
    """Returns ``(tag, data)`` with data shaped ``(n, n, width)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ParseError(f"missing {MAGIC} header", 1)
    try:
        key, val = lines[1].split()
        assert key == "n"
        n = int(val)
    except (IndexError, ValueError, AssertionError):
        raise ParseError("expected 'n <size>'", 2) from None
    try:
        key, tag = lines[2].split()
        assert key == "type" and tag in FIELD_WIDTH
    except (IndexError, ValueError, AssertionError):
        raise ParseError(f"expected 'type <{'|'.join(FIELD_WIDTH)}>'", 3) from None
    width = FIELD_WIDTH[tag]
    rows = []
    for lineno, raw in enumerate(lines[3:], start=4):
        if not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != width:
            raise ParseError(f"expected {width} values, got {len(parts)}", lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError(f"bad number in {raw!r}", lineno) from None
    if len(rows) != n * n:
        raise ParseError(f"expected {n * n} samples, got {len(rows)}", len(lines))
    return tag, np.array(rows).reshape(n, n, width)


def read_metric(path) -> MetricField:
    tag, data = read_field(path)
    if tag != "metric":
        raise ParseError(f"expected a metric field, got {tag!r}", 3)
    return MetricField.from_entries(data[..., 0], data[..., 1], data[..., 2])


# --- logs and reports -------------------------------------------------------------

STAGE_COLUMNS = ("stage", "direction", "N", "sup_defect", "displacement")


def write_stage_log(path, records: Iterable) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(STAGE_COLUMNS)
        for r in records:
            out.writerow([r.stage, r.direction, r.N, fmt(r.sup_defect), fmt(r.displacement)])


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([fmt(x) if isinstance(x, float) else x for x in row])


def write_report(path, items: List[Tuple[str, object]]) -> None:
    lines = []
    for key, value in items:
        if isinstance(value, float):
            value = fmt(value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> Dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        if " = " not in raw:
            raise ParseError("expected 'key = value'", lineno)
        k, v = raw.split(" = ", 1)
        out[k.strip()] = v.strip()
    return out
