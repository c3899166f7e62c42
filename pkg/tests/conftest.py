from pathlib import Path

import numpy as np
import pytest

from predictions import PredictionSet, align_panel


def _write_csv(path: Path, rows, header="sample_id,label,prob") -> Path:
    lines = [header] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def write_csv(tmp_path):
    def write(name, rows, header="sample_id,label,prob"):
        return _write_csv(tmp_path / name, rows, header)
    return write


@pytest.fixture
def perfect_set():
    return PredictionSet(
        "perfect",
        ["a", "b", "c", "d", "e", "f"],
        [1, 1, 1, 0, 0, 0],
        [1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
    )


@pytest.fixture
def three_model_panel():
    ids = ["s1", "s2", "s3", "s4", "s5", "s6"]
    labels = [1, 0, 1, 0, 1, 0]
    return align_panel([
        PredictionSet("m1", ids, labels, [0.9, 0.2, 0.6, 0.4, 0.7, 0.1]),
        PredictionSet("m2", ids, labels, [0.8, 0.3, 0.4, 0.6, 0.9, 0.2]),
        PredictionSet("m3", ids, labels, [0.7, 0.1, 0.5, 0.3, 0.2, 0.4]),
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
