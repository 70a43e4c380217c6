import json

import numpy as np
import pytest

from main import main
from modules.io_formats import dump_operator, dump_spectrum_csv, parse_operator, parse_spectrum_csv

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


@pytest.fixture
def qubit_files(tmp_path):
    h = tmp_path / "H.json"
    b = tmp_path / "B.json"
    h.write_text(dump_operator(np.diag([0.0, 1.0])), encoding="utf-8")
    b.write_text(dump_operator(SIGMA_X), encoding="utf-8")
    return tmp_path, str(h), str(b)


def test_oscillator_report(capsys):
    assert main(["oscillator", "--m", "1", "--omega", "1", "--beta", "1", "--alpha", "0.5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["results"]["I_x"]["value"] == pytest.approx(0.12246, abs=1e-5)
    assert report["inputs"]["subcommand"] == "oscillator"


def test_identical_runs_give_identical_bytes(capsys):
    argv = ["oscillator", "--beta", "2", "--alpha", "0.3"]
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    assert capsys.readouterr().out == first


def test_unknown_function_is_invalid_input(qubit_files, capsys):
    _, h, b = qubit_files
    assert main(["compute", "--h", h, "--beta", "1", "--f", "nonsense", "--generator", b]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_file_is_invalid_input(tmp_path):
    assert main(["compute", "--h", str(tmp_path / "none.json"), "--beta", "1", "--generator", "x.json"]) == 2


def test_compute_qubit(qubit_files):
    tmp, h, b = qubit_files
    state = tmp / "rho.json"
    state.write_text(dump_operator(np.diag([0.7, 0.3])), encoding="utf-8")
    out = tmp / "report.json"
    assert main(["compute", "--state", str(state), "--f", "sld", "--generator", b, "--report", str(out)]) == 0
    assert json.loads(out.read_text())["results"]["J"]["value"] == pytest.approx(0.64, rel=1e-12)


def test_divergence_is_numerical_diagnostic(qubit_files):
    tmp, _, b = qubit_files
    pure = tmp / "pure.json"
    pure.write_text(dump_operator(np.diag([1.0, 0.0])), encoding="utf-8")
    assert main(["compute", "--state", str(pure), "--f", "bkm", "--generator", b]) == 3


def test_fdt_check_with_docx(qubit_files):
    tmp, h, b = qubit_files
    out = tmp / "fdt.json"
    docx = tmp / "fdt.docx"
    argv = ["fdt-check", "--h", h, "--beta", "1", "--f", "wyd:0.3", "--A", b, "--kind", "displacement"]
    assert main(argv + ["--report", str(out), "--docx", str(docx)]) == 0
    report = json.loads(out.read_text())
    assert report["results"]["passed"]["value"] is True
    assert report["results"]["max_deviation"]["value"] <= 1e-10
    assert docx.stat().st_size > 0


def test_reconstruct_from_lines(qubit_files, capsys):
    tmp, _, _ = qubit_files
    lines = tmp / "lines.json"
    lines.write_text('[{"omega": -1, "re": 1.5}, {"omega": 1, "re": 1.5}]', encoding="utf-8")
    assert main(["reconstruct", "--lines", str(lines), "--beta", "1", "--f", "sld"]) == 0
    report = json.loads(capsys.readouterr().out)
    # two lines of weight 1.5 times omega coth(omega/2) / 2, over 2 pi
    expected = 2 * 1.5 * 0.5 / np.tanh(0.5) / (2 * np.pi)
    assert report["results"]["value"]["value"]["re"] == pytest.approx(expected, rel=1e-12)
    assert report["diagnostics"]["method"] == "discrete-sum"


def test_reconstruct_qfi_rejects_cross_spectrum(qubit_files):
    tmp, _, _ = qubit_files
    chi = tmp / "chi.csv"
    chi.write_text(dump_spectrum_csv([-1.0, 1.0], [0j, 0j]), encoding="utf-8")
    argv = ["reconstruct", "--chi", str(chi), "--chi-nu", str(chi), "--beta", "1", "--kind", "qfi"]
    assert main(argv) == 2


def test_uncertainty_csv(tmp_path):
    out = tmp_path / "u.csv"
    assert main(["uncertainty", "--oscillator", "1,1,1", "--alpha", "0.2:0.5:4", "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "alpha,lhs,rhs,gap,satisfied"
    assert len(rows) == 5
    assert all(row.endswith("true") for row in rows[1:])
    assert abs(float(rows[-1].split(",")[3])) <= 1e-8


def test_probe_field_output(qubit_files, capsys):
    _, h, b = qubit_files
    assert main(["probe-field", "--h", h, "--beta", "0.8", "--generator", b]) == 0
    a = parse_operator(capsys.readouterr().out, "A")
    assert abs(a.matrix[0, 1]) == pytest.approx(2 * np.tanh(0.4), rel=1e-12)


def test_simulate_writes_spectrum(qubit_files):
    tmp, h, b = qubit_files
    out = tmp / "chi.csv"
    assert main(["simulate", "--h", h, "--beta", "1", "--probe", b, "--omega-grid", "0.4:0.6:2", "--out", str(out)]) == 0
    spectrum = parse_spectrum_csv(out.read_text())
    assert list(spectrum.grid) == [0.4, 0.6]
    # off resonance the current response of a closed system is reactive
    assert np.all(np.abs(spectrum.values.real) < 1e-2 * np.abs(spectrum.values.imag))


def test_skew_oscillator(capsys):
    assert main(["skew", "--oscillator", "1,1,1", "--alpha", "0.5", "--A", "x", "--f", "wy"]) == 0
    results = json.loads(capsys.readouterr().out)["results"]
    assert results["skew_direct"]["value"] == pytest.approx(0.12246, abs=1e-5)
    assert results["metric_adjusted_skew"]["value"] == pytest.approx(results["skew_direct"]["value"], rel=1e-9)
