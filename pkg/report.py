"""
Renders a ranked report in the result-table layout:
Network | AUC | F1 Score | ECE | Overall Score, flagged rows as footnotes.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING

import pandas as pd
from docx import Document

if TYPE_CHECKING:
    from harness import RankedReport

logger = logging.getLogger(__name__)

COLUMNS = ("Network", "AUC", "F1 Score", "ECE", "Overall Score")

REPORT_FILES = {
    "text": "report.txt",
    "csv": "report.csv",
    "json": "report.json",
    "markdown": "report.md",
    "docx": "report.docx",
}


def format_metric(value: float) -> str:
    return f"{value:.4f}"


def format_score(value: float) -> str:
    """Five decimals, trailing zeros trimmed down to four (1.38625, 1.5262)."""
    text = f"{value:.5f}"
    return text[:-1] if text.endswith("0") else text


def _footnote_marks(report: RankedReport) -> dict[str, int]:
    return {flag.name: i for i, flag in enumerate(report.flags, start=1)}


def _footnotes(report: RankedReport) -> list[str]:
    return [
        f"[{i}] {flag.name}: printed overall score {format_score(flag.printed)} "
        f"disagrees with the recomputed {format_score(flag.recomputed)}"
        for i, flag in enumerate(report.flags, start=1)
    ]


def table_rows(report: RankedReport) -> list[list[str]]:
    marks = _footnote_marks(report)
    rows = []
    for row in report.rows:
        name = f"{row.name} [{marks[row.name]}]" if row.name in marks else row.name
        rows.append([name, format_metric(row.auc), format_metric(row.f1), format_metric(row.ece), format_score(row.overall)])
    return rows


def render_text(report: RankedReport) -> str:
    rows = table_rows(report)
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(COLUMNS)]

    def line(cells):
        return " | ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()

    out = [line(COLUMNS), "-+-".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    notes = _footnotes(report)
    if notes:
        out += [""] + notes
    return "\n".join(out) + "\n"


def render_markdown(report: RankedReport) -> str:
    out = ["| " + " | ".join(COLUMNS) + " |", "|" + "---|" * len(COLUMNS)]
    out += ["| " + " | ".join(r) + " |" for r in table_rows(report)]
    notes = _footnotes(report)
    if notes:
        out += [""] + notes
    return "\n".join(out) + "\n"


def render_csv(report: RankedReport) -> str:
    frame = pd.DataFrame(table_rows(report), columns=list(COLUMNS))
    return frame.to_csv(index=False, lineterminator="\n")


def render_json(report: RankedReport) -> str:
    return report.model_dump_json(indent=2) + "\n"


def write_docx(report: RankedReport, path: Path) -> None:
    doc = Document()
    doc.add_heading("Evaluation metrics and overall scores", level=1)
    table = doc.add_table(rows=1, cols=len(COLUMNS))
    table.style = "Table Grid"
    for cell, title in zip(table.rows[0].cells, COLUMNS):
        cell.text = title
    for values in table_rows(report):
        for cell, value in zip(table.add_row().cells, values):
            cell.text = value
    for note in _footnotes(report):
        doc.add_paragraph(note)
    doc.save(str(path))


_RENDERERS = {
    "text": render_text,
    "csv": render_csv,
    "json": render_json,
    "markdown": render_markdown,
}


def emit_report(report: RankedReport, fmt: str, path: str | Path) -> Path:
    if fmt not in REPORT_FILES:
        raise ValueError(f"Unknown report format {fmt!r}, expected one of {', '.join(REPORT_FILES)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "docx":
        write_docx(report, path)
    else:
        path.write_text(_RENDERERS[fmt](report), encoding="utf-8")
    logger.debug(f"Wrote {fmt} report to {path}")
    return path
