"""
Run configuration and reports.

A Report is a plain nested mapping rendered with io_formats.dumps, so identical
runs produce identical bytes. export_docx writes the same content as a Word
document.
"""

import io
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
from docx import Document
from docx.shared import Pt

from modules import settings
from modules.errors import ValidationError
from modules.io_formats import dumps, format_float

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("compute", "fdt-check", "reconstruct", "skew", "uncertainty", "simulate", "oscillator", "probe-field")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    inputs: Tuple[Tuple[str, str], ...] = ()
    f: str = "sld"
    beta: Optional[float] = None
    hbar: float = 1.0
    eta: Optional[float] = None
    grid: Optional[str] = None
    tolerances: Tuple[Tuple[str, float], ...] = ()
    output: Optional[str] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValidationError(f"unknown subcommand {self.subcommand!r}; expected one of {', '.join(SUBCOMMANDS)}")
        for name in ("beta", "hbar", "eta"):
            value = getattr(self, name)
            if value is not None and not (np.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive, got {value}")
        for name, value in self.tolerances:
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"tolerance {name} must be positive, got {value}")
        if self.seed is not None and self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown configuration keys: {', '.join(unknown)}")
        data = dict(data)
        if "inputs" in data:
            data["inputs"] = tuple(sorted((str(k), str(v)) for k, v in dict(data["inputs"]).items()))
        if "tolerances" in data:
            data["tolerances"] = tuple(sorted((str(k), float(v)) for k, v in dict(data["tolerances"]).items()))
        return cls(**data)

    def tolerance(self, name: str, default: float) -> float:
        return dict(self.tolerances).get(name, default)

    def echo(self) -> Dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "inputs": dict(self.inputs),
            "f": self.f,
            "beta": self.beta,
            "hbar": self.hbar,
            "eta": self.eta,
            "grid": self.grid,
            "tolerances": dict(self.tolerances),
            "seed": self.seed,
        }


@dataclass
class Report:
    config: RunConfig
    results: Dict[str, Any] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    schema: str = settings.REPORT_SCHEMA

    def add(self, name: str, value, estimate: Optional[float] = None) -> None:
        """Record a result; an error estimate or tolerance travels with it when known."""
        entry = {"value": value}
        if estimate is not None:
            entry["estimate"] = float(estimate)
        self.results[name] = entry

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.schema,
            "inputs": self.config.echo(),
            "results": self.results,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def write_report(report: Report, path: Optional[str] = None) -> str:
    text = report.to_json()
    if path:
        Path(path).write_text(text, encoding="utf-8")
        logger.info("wrote report to %s", path)
    return text


def _cell_text(value) -> str:
    if isinstance(value, dict) and set(value) == {"value"}:
        return _cell_text(value["value"])
    if isinstance(value, (complex, np.complexfloating)):
        return f"{format_float(value.real)} + {format_float(value.imag)}i"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, dict):
        return ", ".join(f"{k}={_cell_text(v)}" for k, v in sorted(value.items()))
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_cell_text(v) for v in value) + "]"
    return str(value)


def _add_table(doc, title: str, rows: Mapping[str, Any]) -> None:
    doc.add_heading(title, level=2)
    if not rows:
        doc.add_paragraph("(none)")
        return
    table = doc.add_table(rows=1, cols=2)
    table.style = "Table Grid"
    header = table.rows[0].cells
    header[0].text = "name"
    header[1].text = "value"
    for name in sorted(rows):
        cells = table.add_row().cells
        cells[0].text = str(name)
        cells[1].text = _cell_text(rows[name])
        for paragraph in cells[1].paragraphs:
            for run in paragraph.runs:
                run.font.size = Pt(9)


def export_docx(report: Report, path: Optional[str] = None) -> bytes:
    """
    Render a report as a DOCX document.

    Args:
        report: the run report
        path: optional file to write

    Returns:
        DOCX file content as bytes
    """
    doc = Document()
    doc.add_heading(f"qfi {report.config.subcommand}", level=1)
    doc.add_paragraph(f"schema {report.schema}")
    _add_table(doc, "Inputs", {k: v for k, v in report.config.echo().items() if v not in (None, {}, ())})
    _add_table(doc, "Results", report.results)
    _add_table(doc, "Diagnostics", report.diagnostics)

    output = io.BytesIO()
    doc.save(output)
    raw = output.getvalue()
    if path:
        try:
            Path(path).write_bytes(raw)
        except OSError as e:
            raise ValidationError(f"Failed to write DOCX report: {e}") from e
    return raw
