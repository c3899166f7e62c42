"""
Prediction files and the in-memory model for classifier outputs.

One file holds one model's positive-class probabilities. Files are CSV with a
`sample_id,label,prob` header (or `prob_0,prob_1` softmax columns, normalized
to the positive column on load) or a JSON array of
`{"sample_id", "label", "prob"}` objects.
"""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("sample_id", "label", "prob")
SOFTMAX_COLUMNS = ("prob_0", "prob_1")


class PredictionFileError(ValueError):
    def __init__(self, message: str, row: int | None = None, path: Path | str | None = None):
        self.row = row
        self.path = path
        location = f" at row {row}" if row is not None else ""
        prefix = f"{path}: " if path else ""
        super().__init__(f"{prefix}{message}{location}")


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    label: int
    prob: float

    def __post_init__(self):
        if not self.sample_id:
            raise ValueError("sample_id must be nonempty")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"prob must be within [0, 1], got {self.prob!r}")


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """One model's records, held column-wise. Arrays are read-only copies."""

    model_name: str
    sample_ids: np.ndarray
    labels: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        ids = np.array(self.sample_ids, dtype=str)
        labels = np.array(self.labels)
        probs = np.array(self.probs, dtype=np.float64)

        if ids.ndim != 1 or ids.size == 0:
            raise ValueError(f"{self.model_name}: prediction set must be a nonempty sequence")
        if labels.shape != ids.shape or probs.shape != ids.shape:
            raise ValueError(f"{self.model_name}: sample_ids, labels and probs differ in length")
        if (np.char.str_len(ids) == 0).any():
            raise ValueError(f"{self.model_name}: empty sample_id")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError(f"{self.model_name}: labels must be 0 or 1")
        if not ((probs >= 0.0) & (probs <= 1.0)).all():
            raise ValueError(f"{self.model_name}: probs must be within [0, 1]")
        if np.unique(ids).size != ids.size:
            raise ValueError(f"{self.model_name}: sample_ids must be unique")

        labels = labels.astype(np.int8)
        for arr in (ids, labels, probs):
            arr.setflags(write=False)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_records(cls, model_name: str, records: Iterable[PredictionRecord]) -> "PredictionSet":
        records = list(records)
        return cls(
            model_name,
            np.array([r.sample_id for r in records], dtype=str),
            np.array([r.label for r in records], dtype=np.int8),
            np.array([r.prob for r in records], dtype=np.float64),
        )

    @property
    def records(self) -> tuple[PredictionRecord, ...]:
        return tuple(
            PredictionRecord(str(s), int(l), float(p))
            for s, l, p in zip(self.sample_ids, self.labels, self.probs)
        )

    def take(self, indices: Sequence[int] | np.ndarray) -> "PredictionSet":
        idx = np.asarray(indices, dtype=np.intp)
        return PredictionSet(self.model_name, self.sample_ids[idx], self.labels[idx], self.probs[idx])

    def renamed(self, model_name: str) -> "PredictionSet":
        return PredictionSet(model_name, self.sample_ids, self.labels, self.probs)

    def __len__(self) -> int:
        return int(self.sample_ids.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PredictionSet):
            return NotImplemented
        return (
            self.model_name == other.model_name
            and np.array_equal(self.sample_ids, other.sample_ids)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.probs, other.probs)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PredictionPanel:
    """Several models over the same samples, all in canonical sample_id order."""

    models: tuple[PredictionSet, ...]

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise AlignmentError("a panel needs at least one prediction set")
        first = models[0]
        ids = first.sample_ids
        if ids.size > 1 and not (ids[:-1] < ids[1:]).all():
            raise AlignmentError("panel sample_ids are not in canonical order")
        for member in models[1:]:
            if not np.array_equal(member.sample_ids, ids):
                raise AlignmentError(f"sample sets differ between {first.model_name!r} and {member.model_name!r}")
            if not np.array_equal(member.labels, first.labels):
                raise AlignmentError(f"label conflict between {first.model_name!r} and {member.model_name!r}")
        object.__setattr__(self, "models", models)

    @property
    def sample_ids(self) -> np.ndarray:
        return self.models[0].sample_ids

    @property
    def labels(self) -> np.ndarray:
        return self.models[0].labels

    @property
    def model_names(self) -> tuple[str, ...]:
        return tuple(m.model_name for m in self.models)

    @property
    def n_models(self) -> int:
        return len(self.models)

    @property
    def n_samples(self) -> int:
        return len(self.models[0])

    def matrix(self) -> np.ndarray:
        """Probabilities as an (n_samples, n_models) array in model order."""
        return np.column_stack([m.probs for m in self.models])

    def subset(self, indices: Sequence[int] | np.ndarray) -> "PredictionPanel":
        idx = np.sort(np.asarray(indices, dtype=np.intp))
        return PredictionPanel(tuple(m.take(idx) for m in self.models))

    def select(self, model_names: Sequence[str]) -> "PredictionPanel":
        by_name = {m.model_name: m for m in self.models}
        missing = [n for n in model_names if n not in by_name]
        if missing:
            raise AlignmentError(f"unknown model(s) in panel: {', '.join(missing)}")
        return PredictionPanel(tuple(by_name[n] for n in model_names))


# ==============================
# Loading / saving
# ==============================

def _parse_floats(series: pd.Series, column: str, path) -> np.ndarray:
    values = np.empty(len(series), dtype=np.float64)
    for row, raw in enumerate(series, start=1):
        try:
            values[row - 1] = float(raw)
        except (TypeError, ValueError):
            raise PredictionFileError(f"malformed {column} value {raw!r}", row=row, path=path) from None
    return values


def _first_bad(mask: np.ndarray) -> int | None:
    bad = np.flatnonzero(mask)
    return int(bad[0]) + 1 if bad.size else None


def _frame_to_set(frame: pd.DataFrame, model_name: str, path) -> PredictionSet:
    frame = frame.rename(columns=lambda c: str(c).strip())
    columns = set(frame.columns)
    if not {"sample_id", "label"} <= columns:
        raise PredictionFileError("missing header, expected sample_id,label,prob", path=path)
    if frame.empty:
        raise PredictionFileError("no prediction rows", path=path)

    if "prob" in columns:
        probs = _parse_floats(frame["prob"], "prob", path)
    elif set(SOFTMAX_COLUMNS) <= columns:
        p0 = _parse_floats(frame["prob_0"], "prob_0", path)
        p1 = _parse_floats(frame["prob_1"], "prob_1", path)
        row = _first_bad(~((p0 >= 0.0) & (p1 >= 0.0) & (p0 + p1 > 0.0)))
        if row is not None:
            raise PredictionFileError("invalid softmax pair", row=row, path=path)
        probs = p1 / (p0 + p1)
    else:
        raise PredictionFileError("missing prob column", path=path)

    ids = frame["sample_id"].astype(str).str.strip()
    row = _first_bad(ids.eq("").to_numpy())
    if row is not None:
        raise PredictionFileError("empty sample_id", row=row, path=path)

    labels = _parse_floats(frame["label"], "label", path)
    row = _first_bad(~np.isin(labels, (0.0, 1.0)))
    if row is not None:
        raise PredictionFileError("label not in {0,1}", row=row, path=path)

    row = _first_bad(~((probs >= 0.0) & (probs <= 1.0)))
    if row is not None:
        raise PredictionFileError("prob out of range", row=row, path=path)

    row = _first_bad(ids.duplicated().to_numpy())
    if row is not None:
        raise PredictionFileError(f"duplicate sample_id {ids.iloc[row - 1]}", row=row, path=path)

    return PredictionSet(model_name, ids.to_numpy(dtype=str), labels.astype(np.int8), probs)


def _read_json_frame(path: Path) -> pd.DataFrame:
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PredictionFileError(f"invalid JSON ({exc.msg})", path=path) from None
    if not isinstance(rows, list):
        raise PredictionFileError("expected a JSON array of records", path=path)
    for row, item in enumerate(rows, start=1):
        if not isinstance(item, dict):
            raise PredictionFileError("record is not an object", row=row, path=path)
        if not isinstance(item.get("sample_id"), str):
            raise PredictionFileError("sample_id must be a string", row=row, path=path)
        label = item.get("label")
        if isinstance(label, bool) or not isinstance(label, int):
            raise PredictionFileError("label must be an integer", row=row, path=path)
        for column in ("prob", *SOFTMAX_COLUMNS):
            value = item.get(column)
            if column in item and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise PredictionFileError(f"{column} must be a number", row=row, path=path)
    return pd.DataFrame.from_records(rows, columns=None if rows else list(CSV_COLUMNS))


def _parser_error_row(exc: pd.errors.ParserError) -> int | None:
    # pandas counts the header as line 1
    match = re.search(r"line (\d+)", str(exc))
    return int(match.group(1)) - 1 if match else None


def load_prediction_set(path: str | Path, model_name: str | None = None) -> PredictionSet:
    path = Path(path)
    name = model_name or path.stem
    if path.suffix.lower() == ".json":
        frame = _read_json_frame(path)
    else:
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
        except pd.errors.EmptyDataError:
            raise PredictionFileError("empty file", path=path) from None
        except pd.errors.ParserError as exc:
            raise PredictionFileError("malformed CSV row", row=_parser_error_row(exc), path=path) from None
    pset = _frame_to_set(frame, name, path)
    logger.debug(f"Loaded {len(pset)} predictions for {name} from {path}")
    return pset


def load_prediction_sets(paths: Sequence[str | Path], names: Sequence[str | None] | None = None) -> list[PredictionSet]:
    names = list(names) if names is not None else [None] * len(paths)
    if len(names) != len(paths):
        raise ValueError("names and paths differ in length")
    with ThreadPoolExecutor(max_workers=min(8, max(1, len(paths)))) as pool:
        return list(pool.map(load_prediction_set, paths, names))


def prediction_rows(pset: PredictionSet) -> list[dict]:
    return [
        {"sample_id": str(s), "label": int(l), "prob": float(p)}
        for s, l, p in zip(pset.sample_ids, pset.labels, pset.probs)
    ]


def prediction_frame(pset: PredictionSet) -> pd.DataFrame:
    return pd.DataFrame({"sample_id": pset.sample_ids, "label": pset.labels.astype(int), "prob": pset.probs})


def prediction_csv(pset: PredictionSet) -> str:
    return prediction_frame(pset).to_csv(index=False, lineterminator="\n")


def save_prediction_set(pset: PredictionSet, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(prediction_rows(pset), indent=1) + "\n", encoding="utf-8")
    else:
        path.write_text(prediction_csv(pset), encoding="utf-8")
    return path


# ==============================
# Alignment
# ==============================

def align_panel(sets: Sequence[PredictionSet]) -> PredictionPanel:
    sets = list(sets)
    if not sets:
        raise AlignmentError("align_panel needs at least one prediction set")

    names = [s.model_name for s in sets]
    duplicated = sorted({n for n in names if names.count(n) > 1})
    if duplicated:
        raise AlignmentError(f"duplicate model name(s): {', '.join(duplicated)}")

    reference = sets[0]
    canonical = np.sort(reference.sample_ids)
    for other in sets[1:]:
        if len(other) != len(reference) or not np.array_equal(np.sort(other.sample_ids), canonical):
            raise AlignmentError(
                f"sample sets differ between {reference.model_name!r} and {other.model_name!r}"
            )

    aligned = [s.take(np.argsort(s.sample_ids, kind="stable")) for s in sets]
    for other in aligned[1:]:
        conflict = np.flatnonzero(other.labels != aligned[0].labels)
        if conflict.size:
            sample = aligned[0].sample_ids[conflict[0]]
            raise AlignmentError(
                f"label conflict for sample_id {sample} between {reference.model_name!r} and {other.model_name!r}"
            )
    return PredictionPanel(tuple(aligned))
