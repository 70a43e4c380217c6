"""
File formats shared by the CLI and the dashboard.

    operator JSON   {"dim": n, "re": [[...]], "im": [[...]]}
    spectrum CSV    header "omega,re,im", one row per grid point
    line-set JSON   [{"omega": w, "re": x, "im": y}, ...]
    grid spec       "min:max:count"

Floats are written with 17 significant digits so that every value re-parses
to the same double.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from modules.errors import ValidationError
from modules.linear_response import AdmittanceSpectrum, SpectralLineSet
from modules.spectral_core import HermitianOperator

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _load_json(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{source}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e


def _matrix(rows, n: int, part: str, source: str) -> np.ndarray:
    if not isinstance(rows, list) or len(rows) != n:
        raise ValidationError(f"{source}: '{part}' must be a list of {n} rows")
    out = np.empty((n, n), dtype=float)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise ValidationError(f"{source}: '{part}' row {i} must have {n} entries")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValidationError(f"{source}: '{part}'[{i}][{j}] is not a number")
            out[i, j] = v
    return out


def parse_operator(text: str, label: str = "operator", hermitian: bool = True) -> Union[HermitianOperator, np.ndarray]:
    """
    Parse operator JSON.

    Args:
        text: JSON document
        label: operator name used in error messages
        hermitian: validate and wrap as HermitianOperator

    Returns:
        HermitianOperator, or a complex array when hermitian is False
    """
    data = _load_json(text, label)
    if not isinstance(data, dict):
        raise ValidationError(f"{label}: expected a JSON object with keys dim, re, im")
    unknown = set(data) - {"dim", "re", "im"}
    if unknown:
        raise ValidationError(f"{label}: unknown keys {sorted(unknown)}")
    n = data.get("dim")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ValidationError(f"{label}: 'dim' must be a positive integer")
    re = _matrix(data.get("re"), n, "re", label)
    im = _matrix(data["im"], n, "im", label) if "im" in data else np.zeros((n, n))
    m = re + 1j * im
    if not hermitian:
        return m
    return HermitianOperator(m, label=label)


def dump_operator(m) -> str:
    m = np.asarray(getattr(m, "matrix", m), dtype=complex)
    n = m.shape[0]
    doc = {
        "dim": n,
        "re": [[float(x) for x in row] for row in m.real],
        "im": [[float(x) for x in row] for row in m.imag],
    }
    return dumps(doc)


def read_operator(path: PathLike, label: str = None, hermitian: bool = True):
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{p}: file not found")
    return parse_operator(p.read_text(encoding="utf-8"), label or p.stem, hermitian)


def parse_spectrum_csv(
    text: str,
    source: str = "spectrum",
    eta: float = 0.0,
    kind: str = "response",
    provenance: str = "measured",
) -> AdmittanceSpectrum:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise ValidationError(f"{source}: empty file")
    header = [c.strip().lower() for c in rows[0]]
    if header != ["omega", "re", "im"]:
        raise ValidationError(f"{source}: line 1: expected header 'omega,re,im', got {','.join(rows[0])!r}")
    grid, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ValidationError(f"{source}: line {lineno}: expected 3 columns, got {len(row)}")
        try:
            w, re, im = (float(c) for c in row)
        except ValueError:
            col = next(i for i, c in enumerate(row) if not _is_float(c)) + 1
            raise ValidationError(f"{source}: line {lineno}, column {col}: not a number: {row[col - 1]!r}") from None
        grid.append(w)
        values.append(complex(re, im))
    return AdmittanceSpectrum(np.array(grid), np.array(values), eta=eta, provenance=provenance, kind=kind)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def dump_spectrum_csv(grid: Iterable[float], values: Iterable[complex]) -> str:
    lines = ["omega,re,im"]
    for w, v in zip(grid, values):
        v = complex(v)
        lines.append(f"{format_float(w)},{format_float(v.real)},{format_float(v.imag)}")
    return "\n".join(lines) + "\n"


def read_spectrum(path: PathLike, **kwargs) -> AdmittanceSpectrum:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{p}: file not found")
    return parse_spectrum_csv(p.read_text(encoding="utf-8"), source=str(p), **kwargs)


def parse_lines(text: str, kind: str, beta: float, hbar: float = 1.0, source: str = "lines") -> SpectralLineSet:
    data = _load_json(text, source)
    if not isinstance(data, list):
        raise ValidationError(f"{source}: expected a JSON list of lines")
    omegas, weights = [], []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict) or "omega" not in entry:
            raise ValidationError(f"{source}: entry {i} must be an object with omega, re, im")
        try:
            omegas.append(float(entry["omega"]))
            weights.append(complex(float(entry.get("re", 0.0)), float(entry.get("im", 0.0))))
        except (TypeError, ValueError):
            raise ValidationError(f"{source}: entry {i} has a non-numeric field") from None
    return SpectralLineSet(np.array(omegas), np.array(weights, dtype=complex), kind, beta, hbar)


def dump_lines(lines: SpectralLineSet) -> str:
    return dumps([{"omega": float(w), "re": float(v.real), "im": float(v.imag)} for w, v in zip(lines.omegas, lines.weights)])


def parse_grid(spec: str) -> np.ndarray:
    """'min:max:count' -> linspace(min, max, count)."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValidationError(f"grid spec {spec!r} must look like min:max:count")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError(f"grid spec {spec!r} must look like min:max:count") from None
    if count < 2 or not hi > lo:
        raise ValidationError(f"grid spec {spec!r}: need max > min and count >= 2")
    return np.linspace(lo, hi, count)


def _encode(obj):
    """Deterministic JSON tree: floats as 17-digit strings, complex as {re, im}."""
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_encode(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _Float(obj.real), "im": _Float(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        return _Float(obj)
    return obj


class _Float(float):
    def __repr__(self) -> str:
        return format_float(self)


def dumps(obj) -> str:
    """JSON with sorted keys, two-space indent and lossless floats."""
    tree = _encode(obj)
    return _render(tree, 0) + "\n"


def _render(node, depth: int) -> str:
    pad = "  " * (depth + 1)
    end = "  " * depth
    if isinstance(node, dict):
        if not node:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_render(node[k], depth + 1)}" for k in sorted(node)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(node, list):
        if not node:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in node):
            return "[" + ", ".join(_render(v, depth + 1) for v in node) + "]"
        return "[\n" + ",\n".join(pad + _render(v, depth + 1) for v in node) + "\n" + end + "]"
    if isinstance(node, _Float):
        if not np.isfinite(node):
            return json.dumps(str(float(node)))
        return format_float(node)
    return json.dumps(node)
