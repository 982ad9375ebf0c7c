"""Dataset ingestion, empirical prior/conditional estimation, result export.

The dataset schema is a UTF-8 CSV with header ``user,x`` or ``user,x,g``;
user ids may repeat (history rows).  All numeric output is written with six
significant digits.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Alphabet, LatentModel, Prior
from .simulate import TradeoffPoint


class DatasetError(ValueError):
    """Malformed file or labels outside the declared alphabets."""


@dataclass(frozen=True)
class Dataset:
    records: tuple  # (user_id, x_label, g_label or None) triples
    alphabet: Alphabet
    latent_alphabet: Alphabet | None

    @property
    def has_latent(self) -> bool:
        return self.latent_alphabet is not None

    def x_indices(self) -> np.ndarray:
        return np.array([self.alphabet.index_of(r[1]) for r in self.records])

    def g_indices(self) -> np.ndarray:
        if not self.has_latent:
            raise DatasetError("dataset carries no latent column")
        return np.array([self.latent_alphabet.index_of(r[2]) for r in self.records])


def _infer_alphabet(labels) -> Alphabet:
    distinct = sorted(set(labels), key=_label_key)
    return Alphabet(distinct)


def _label_key(label: str):
    try:
        return (0, float(label), "")
    except ValueError:
        return (1, 0.0, label)


def load_dataset(
    path,
    alphabet: Alphabet | None = None,
    latent_alphabet: Alphabet | None = None,
) -> Dataset:
    """Parse a ``user,x[,g]`` CSV; unknown labels are collected and reported
    together with their row numbers."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        if header not in (["user", "x"], ["user", "x", "g"]):
            raise DatasetError(f"{path}: header must be 'user,x' or 'user,x,g'")
        with_g = len(header) == 3
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header) or any(not c.strip() for c in row):
                raise DatasetError(f"{path}: malformed row at line {lineno}")
            rows.append((lineno, [c.strip() for c in row]))
    if not rows:
        raise DatasetError(f"{path}: no data rows")

    x_labels = [r[1][1] for r in rows]
    if alphabet is None:
        alphabet = _infer_alphabet(x_labels)
    g_labels = [r[1][2] for r in rows] if with_g else None
    if with_g and latent_alphabet is None:
        latent_alphabet = _infer_alphabet(g_labels)

    bad = []
    known_x = set(alphabet.labels)
    known_g = set(latent_alphabet.labels) if with_g else set()
    for (lineno, row) in rows:
        if row[1] not in known_x or (with_g and row[2] not in known_g):
            bad.append(lineno)
    if bad:
        raise DatasetError(f"{path}: unknown labels at lines {bad}")

    records = tuple(
        (row[0], row[1], row[2] if with_g else None) for _, row in rows
    )
    return Dataset(records, alphabet, latent_alphabet if with_g else None)


def empirical_prior(dataset: Dataset, alpha: float = 0.0) -> Prior:
    """Normalized label frequencies with optional add-alpha smoothing."""
    if alpha < 0:
        raise ValueError("smoothing must be non-negative")
    counts = np.bincount(dataset.x_indices(), minlength=dataset.alphabet.d).astype(float)
    counts += alpha
    return Prior(counts / counts.sum())


def empirical_conditional(dataset: Dataset, alpha: float | None = None) -> LatentModel:
    """Latent model from (x, g) pairs: unsmoothed latent frequencies and
    smoothed conditional rows (default smoothing 1/d).

    Stands in for a learned value-attribute coupling; the interface
    downstream is identical either way.
    """
    if not dataset.has_latent:
        raise DatasetError("dataset carries no latent column")
    d = dataset.alphabet.d
    n_g = dataset.latent_alphabet.d
    if alpha is None:
        alpha = 1.0 / d
    if alpha < 0:
        raise ValueError("smoothing must be non-negative")
    counts = np.zeros((n_g, d))
    np.add.at(counts, (dataset.g_indices(), dataset.x_indices()), 1.0)
    g_totals = counts.sum(axis=1)
    if alpha == 0 and np.any(g_totals == 0):
        raise DatasetError("latent value with no rows needs alpha > 0")
    cond = (counts + alpha) / (g_totals + alpha * d)[:, None]
    g_prior = g_totals / g_totals.sum()
    return LatentModel(g_prior, cond, dataset.alphabet)


_TRADEOFF_FIELDS = ("epsilon", "analytic_mse", "empirical_mse", "root_avg_mse", "trials")


def _sig6(v) -> str:
    return f"{v:.6g}"


def export_tradeoff(points: list[TradeoffPoint], path, fmt: str = "csv") -> None:
    """Write tradeoff points as CSV (header exactly the field names) or a
    JSON array of objects with those keys; six significant digits."""
    if not points:
        raise ValueError("nothing to export")
    path = Path(path)
    if fmt == "csv":
        lines = [",".join(_TRADEOFF_FIELDS)]
        for pt in points:
            lines.append(
                ",".join(
                    [
                        _sig6(pt.epsilon),
                        _sig6(pt.analytic_mse),
                        _sig6(pt.empirical_mse),
                        _sig6(pt.root_avg_mse),
                        str(pt.trials),
                    ]
                )
            )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif fmt == "json":
        payload = [
            {
                "epsilon": float(_sig6(pt.epsilon)),
                "analytic_mse": float(_sig6(pt.analytic_mse)),
                "empirical_mse": float(_sig6(pt.empirical_mse)),
                "root_avg_mse": float(_sig6(pt.root_avg_mse)),
                "trials": pt.trials,
            }
            for pt in points
        ]
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown export format {fmt!r}")


def load_tradeoff(path, fmt: str = "csv") -> list[TradeoffPoint]:
    """Inverse of :func:`export_tradeoff` at the declared precision."""
    path = Path(path)
    points = []
    if fmt == "csv":
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != _TRADEOFF_FIELDS:
                raise DatasetError(f"{path}: unexpected tradeoff header")
            for row in reader:
                points.append(
                    TradeoffPoint(
                        epsilon=float(row["epsilon"]),
                        analytic_mse=float(row["analytic_mse"]),
                        empirical_mse=float(row["empirical_mse"]),
                        root_avg_mse=float(row["root_avg_mse"]),
                        trials=int(row["trials"]),
                    )
                )
    elif fmt == "json":
        for obj in json.loads(path.read_text(encoding="utf-8")):
            points.append(TradeoffPoint(**obj))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    if not points:
        raise DatasetError(f"{path}: no tradeoff rows")
    return points
