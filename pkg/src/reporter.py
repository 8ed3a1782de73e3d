# -*- coding: utf-8 -*-
"""
reporter.py — JSON / CSV / PDF output of covfactor results
→ Deterministic JSON: sorted keys, complex as [re, im], NaN as null
→ CSV through pandas at 17 significant digits
→ One writer for every artifact (None target = stdout)
→ ReportLab PDF summary of a factorization report
"""

import dataclasses
import json
import math
import sys
from datetime import datetime
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from src.factorization import FactorizationReport
from src.hamiltonian import AssembledHamiltonian
from src.logger import get_logger

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"


# ===============================
# JSON CONVERSION
# ===============================
def _number(x) -> Any:
    x = float(x)
    return x if math.isfinite(x) else None


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; complex → [re, im], tuple keys → "p,q", NaN → None"""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        return _number(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_number(obj.real), _number(obj.imag)]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return to_jsonable(np.stack([obj.real, obj.imag], axis=-1).tolist())
        return to_jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {",".join(map(str, k)) if isinstance(k, tuple) else str(k): to_jsonable(v)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if dataclasses.is_dataclass(obj):
        # repr=False fields (embedded operators) stay out of the artifacts
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.repr}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_to_dict(report: FactorizationReport) -> dict:
    """Report as a JSON-ready dict with conserved operators as coefficient vectors."""
    conserved = [
        [{"coefficients": to_jsonable(c.coefficients), "eigenvalue": to_jsonable(c.eigenvalue),
          "residual": _number(c.residual)} for c in factor]
        for factor in report.conserved
    ]
    return {
        "verdict": report.verdict,
        "energy": to_jsonable(report.energy),
        "tolerance": _number(report.tolerance),
        "max_residual": _number(report.max_residual),
        "global_residual": to_jsonable(report.global_residual),
        "field_residuals": to_jsonable(report.field_residuals),
        "coupling_residuals": to_jsonable(report.coupling_residuals),
        "internal_residuals": to_jsonable(report.internal_residuals),
        "ranks": to_jsonable(report.ranks),
        "factor_energies": to_jsonable(report.factor_energies),
        "conserved": conserved,
        "notes": list(report.notes),
    }


def dumps(obj: Any) -> str:
    if isinstance(obj, FactorizationReport):
        obj = report_to_dict(obj)
    return json.dumps(to_jsonable(obj), sort_keys=True, allow_nan=False, indent=2) + "\n"


# ===============================
# SINGLE WRITER
# ===============================
def write_text(text: str, path: Optional[str] = None) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")
    logger.info(f"wrote {target}")


def write_json(obj: Any, path: Optional[str] = None) -> None:
    write_text(dumps(obj), path)


def frame(rows: Sequence[dict]) -> pd.DataFrame:
    """Rows → DataFrame with columns in first-seen order"""
    columns = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    return pd.DataFrame(list(rows), columns=columns)


def write_csv(rows, path: Optional[str] = None) -> None:
    df = rows if isinstance(rows, pd.DataFrame) else frame(rows)
    write_text(df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"), path)


def hamiltonian_triplets(hamiltonian: AssembledHamiltonian) -> pd.DataFrame:
    """Nonzero entries (row, col, re, im) in natural site order, offset excluded"""
    coo = hamiltonian.matrix.csr.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return pd.DataFrame({
        "row": coo.row[order].astype(int),
        "col": coo.col[order].astype(int),
        "re": coo.data[order].real,
        "im": coo.data[order].imag,
    })


def write_matrix(hamiltonian: AssembledHamiltonian, path: Optional[str] = None) -> None:
    write_csv(hamiltonian_triplets(hamiltonian), path)


# ===============================
# PDF STYLES
# ===============================
styles = getSampleStyleSheet()

title_style = ParagraphStyle(
    name="CovTitle",
    parent=styles["Title"],
    fontSize=20,
    spaceAfter=20,
    alignment=TA_CENTER,
    textColor=colors.darkgreen,
)

subtitle_style = ParagraphStyle(
    name="CovSubtitle",
    parent=styles["Heading2"],
    fontSize=13,
    spaceAfter=12,
    textColor=colors.blue,
)

TABLE_STYLE = TableStyle([
    ("GRID", (0, 0), (-1, -1), 1, colors.grey),
    ("BACKGROUND", (0, 0), (-1, 0), colors.lightgrey),
    ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
    ("FONTSIZE", (0, 0), (-1, -1), 10),
    ("ALIGN", (0, 0), (-1, -1), "LEFT"),
    ("VALIGN", (0, 0), (-1, -1), "MIDDLE"),
    ("LEFTPADDING", (0, 0), (-1, -1), 8),
])


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, complex):
        return f"{x.real:.6g}{x.imag:+.6g}j"
    return f"{x:.3e}" if isinstance(x, float) else str(x)


def _table(rows: list, widths=None) -> Table:
    table = Table(rows, colWidths=widths, repeatRows=1)
    table.setStyle(TABLE_STYLE)
    return table


# ===============================
# PDF REPORT
# ===============================
def generate_pdf_report(report: FactorizationReport, path: str, title: str = "Factorization report",
                        model_label: Optional[str] = None) -> Path:
    """Verdict, energy, residual tables and conserved operators as a PDF"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    doc = SimpleDocTemplate(str(target), pagesize=A4, topMargin=inch, bottomMargin=inch,
                            leftMargin=0.8 * inch, rightMargin=0.8 * inch)
    story = [Paragraph(title, title_style)]
    if model_label:
        story.append(Paragraph(model_label, subtitle_style))

    summary = [
        ["Generated", datetime.now().strftime("%Y-%m-%d %H:%M:%S")],
        ["Verdict", "factorized eigenstate" if report.verdict else "not an eigenstate"],
        ["Energy", _fmt(report.energy)],
        ["Tolerance", _fmt(report.tolerance)],
        ["Max residual", _fmt(report.max_residual)],
        ["Global residual", _fmt(report.global_residual)],
    ]
    story.extend([_table(summary, [2.5 * inch, 3.5 * inch]), Spacer(1, 18)])

    story.append(Paragraph("Factors", styles["Heading2"]))
    rows = [["Factor", "Rank", "Field residual", "Internal residual", "Energy"]]
    for p, (rank, res, energy) in enumerate(zip(report.ranks, report.field_residuals,
                                                report.factor_energies)):
        rows.append([str(p), str(rank), _fmt(res), _fmt(report.internal_residuals.get(p)), _fmt(energy)])
    story.extend([_table(rows), Spacer(1, 18)])

    story.append(Paragraph("Couplings", styles["Heading2"]))
    if report.coupling_residuals:
        rows = [["Pair", "Residual"]] + [[f"{p}-{q}", _fmt(r)]
                                         for (p, q), r in report.coupling_residuals.items()]
        story.append(_table(rows, [2 * inch, 3 * inch]))
    else:
        story.append(Paragraph("No coupled factor pairs.", styles["Normal"]))
    story.append(Spacer(1, 18))

    story.append(Paragraph("Conserved local operators", styles["Heading2"]))
    for p, factor in enumerate(report.conserved):
        for op in factor:
            coeffs = ", ".join(_fmt(complex(c)) for c in op.coefficients)
            story.append(Paragraph(f"factor {p}: [{coeffs}] eigenvalue {_fmt(complex(op.eigenvalue))}",
                                   styles["Normal"]))
    for note in report.notes:
        story.append(Paragraph(f"- {note}", styles["Normal"]))

    doc.build(story)
    logger.info(f"PDF report written to {target}")
    return target
