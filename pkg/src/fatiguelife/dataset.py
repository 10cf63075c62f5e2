"""Censored constant-amplitude fatigue records: loading, validation, strata."""
from __future__ import annotations

import csv
import io
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

COLUMNS = ("s_max", "cycle_ratio", "cycles", "runout")


class SchemaError(ValueError):
    """Header does not match the fixed column layout."""


class RecordError(ValueError):
    """A data row failed to parse or violates a record invariant."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True, order=True)
class FatigueRecord:
    s_max: float
    cycle_ratio: float
    cycles: int
    runout: bool

    def __post_init__(self):
        if not (math.isfinite(self.s_max) and self.s_max > 0):
            raise RecordError(f"s_max must be positive, got {self.s_max}")
        if not (math.isfinite(self.cycle_ratio) and self.cycle_ratio < 1):
            raise RecordError(f"cycle_ratio must be < 1, got {self.cycle_ratio}")
        if self.cycles < 1:
            raise RecordError(f"cycles must be >= 1, got {self.cycles}")

    @property
    def failed(self):
        return not self.runout


def equivalent_stress(s_max, cycle_ratio, q):
    """``s_max * (1 - R)**q``; broadcasts over arrays."""
    return np.asarray(s_max, dtype=float) * (1.0 - np.asarray(cycle_ratio, dtype=float)) ** q


class FatigueDataset:
    """Immutable ordered collection of records with cached column arrays."""

    def __init__(self, records):
        self.records = tuple(records)
        if not self.records:
            raise ValueError("a dataset needs at least one record")
        self.s_max = np.array([r.s_max for r in self.records], dtype=float)
        self.cycle_ratio = np.array([r.cycle_ratio for r in self.records], dtype=float)
        self.cycles = np.array([r.cycles for r in self.records], dtype=np.int64)
        self.runout = np.array([r.runout for r in self.records], dtype=bool)
        self.log10_cycles = np.log10(self.cycles.astype(float))
        for arr in (self.s_max, self.cycle_ratio, self.cycles, self.runout, self.log10_cycles):
            arr.flags.writeable = False
        groups = OrderedDict()
        for i, r in enumerate(self.records):
            groups.setdefault(r.cycle_ratio, []).append(i)
        self.strata = tuple(tuple(ix) for ix in groups.values())

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __repr__(self):
        return (f"<FatigueDataset: {len(self)} records, {self.n_runouts} run-outs, "
                f"{len(self.strata)} strata>")

    @property
    def n_runouts(self):
        return int(self.runout.sum())

    @property
    def failed(self):
        return ~self.runout

    def subset(self, indices):
        return FatigueDataset([self.records[i] for i in indices])

    def equivalent_stress(self, q):
        return equivalent_stress(self.s_max, self.cycle_ratio, q)


def stratify(dataset):
    """Group records by exact cycle ratio, in order of first appearance."""
    return [[dataset.records[i] for i in ix] for ix in dataset.strata]


def _parse_row(row, lineno):
    try:
        s_max = float(row["s_max"])
        ratio = float(row["cycle_ratio"])
        cycles_f = float(row["cycles"])
        runout_s = row["runout"].strip()
    except (TypeError, ValueError) as exc:
        raise RecordError(f"non-numeric cell ({exc})", lineno) from None
    if not cycles_f.is_integer():
        raise RecordError(f"cycles must be an integer, got {row['cycles']!r}", lineno)
    if runout_s not in ("0", "1"):
        raise RecordError(f"runout must be 0 or 1, got {runout_s!r}", lineno)
    try:
        return FatigueRecord(s_max, ratio, int(cycles_f), runout_s == "1")
    except RecordError as exc:
        raise RecordError(str(exc), lineno) from None


def read_csv(stream):
    lines = []
    for lineno, line in enumerate(stream, start=1):
        if line.lstrip().startswith("#") or not line.strip():
            continue
        lines.append((lineno, line))
    if not lines:
        raise SchemaError("empty file: header row missing")
    reader = csv.reader([ln for _, ln in lines])
    header = [h.strip() for h in next(reader)]
    for col in COLUMNS:
        if col not in header:
            raise SchemaError(f"missing column {col!r}")
    for col in header:
        if col not in COLUMNS:
            raise SchemaError(f"unexpected column {col!r}")
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column in header")
    records = []
    for (lineno, _), cells in zip(lines[1:], reader):
        if len(cells) != len(header):
            raise RecordError(f"expected {len(header)} cells, got {len(cells)}", lineno)
        records.append(_parse_row(dict(zip(header, cells)), lineno))
    return FatigueDataset(records)


def load_csv(path):
    """Load a ``s_max,cycle_ratio,cycles,runout`` CSV file into a dataset.

    Lines starting with ``#`` are skipped. Row numbers in errors count
    physical lines of the file, header included.
    """
    with open(Path(path), encoding="utf-8", newline="") as fh:
        return read_csv(fh)


def to_csv(dataset, path=None, comments=()):
    """Serialise in the load_csv schema; returns the text when ``path`` is None."""
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    buf.write(",".join(COLUMNS) + "\n")
    for r in dataset.records:
        buf.write(f"{r.s_max:.10g},{r.cycle_ratio:.10g},{r.cycles:d},{int(r.runout)}\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
