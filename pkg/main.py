"""
Command-line front end: one subcommand per pipeline.

    qfi compute      QFI of a unitary model
    qfi fdt-check    line-by-line generalized FDT check
    qfi reconstruct  covariance / QFI from a measured spectrum or line set
    qfi skew         WYD and metric adjusted skew information
    qfi uncertainty  Yanagi inequality sides over an alpha sweep (CSV)
    qfi simulate     driven virtual experiment, spectrum CSV out
    qfi oscillator   closed-form thermal oscillator values
    qfi probe-field  probe field whose current is the logarithmic derivative
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from modules import settings
from modules.covariance import qfi_unitary_model
from modules.driven_simulator import measure_spectrum
from modules.errors import QfiError, ValidationError, exit_code_for
from modules.fdt_reconstruction import (
    check_gfdt,
    covariance_from_admittance,
    covariance_from_susceptibility,
    qfi_from_susceptibility,
    solve_probe_field,
)
from modules.io_formats import dump_operator, dump_spectrum_csv, format_float, parse_grid, parse_lines, read_operator, read_spectrum
from modules.monotone_functions import parse_function
from modules.oscillator import OscillatorSpec
from modules.reporting import Report, RunConfig, export_docx, write_report
from modules.skew_information import (
    metric_adjusted_skew,
    oscillator_oracle,
    uncertainty_quantity,
    variance,
    wyd_skew_direct,
    wyd_skew_via_qfi,
    yanagi_check,
)
from modules.spectral_core import DensityMatrix, thermal_state

logger = logging.getLogger("qfi")


def _add_state_args(p: argparse.ArgumentParser, allow_rho: bool = True) -> None:
    p.add_argument("--h", help="Hamiltonian (operator JSON)")
    p.add_argument("--beta", type=float, help="inverse temperature")
    p.add_argument("--hbar", type=float, default=1.0, help="reduced Planck constant (default 1)")
    if allow_rho:
        p.add_argument("--state", help="density matrix (operator JSON) instead of --h/--beta")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--report", help="write the JSON report here instead of stdout")
    p.add_argument("--docx", help="also export the report as DOCX")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfi", description="Quantum Fisher information from linear response.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="QFI of the unitary model generated by B")
    _add_state_args(p)
    p.add_argument("--f", default="sld", help="monotone function (catalog name, wyd:ALPHA or expr:...)")
    p.add_argument("--generator", required=True, help="generator B (operator JSON)")
    _add_output_args(p)

    p = sub.add_parser("fdt-check", help="compare covariance and response lines")
    _add_state_args(p, allow_rho=False)
    p.add_argument("--f", default="sld")
    p.add_argument("--A", dest="a", required=True, help="displacement operator A_mu")
    p.add_argument("--B", dest="b", help="second operator A_nu (default A_mu)")
    p.add_argument("--kind", choices=("current", "displacement"), default="current")
    _add_output_args(p)

    p = sub.add_parser("reconstruct", help="covariance or QFI from response data")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--chi", help="spectrum CSV (omega,re,im)")
    src.add_argument("--lines", help="line-set JSON")
    p.add_argument("--chi-nu", help="(nu, mu) spectrum or line set for cross covariances")
    p.add_argument("--f", default="sld")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--hbar", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.0, help="broadening of the spectrum, reported only")
    p.add_argument("--kind", choices=("current", "displacement", "qfi"), default="current")
    _add_output_args(p)

    p = sub.add_parser("skew", help="WYD / metric adjusted skew information")
    _add_state_args(p)
    p.add_argument("--oscillator", help="m,omega,beta for the thermal oscillator")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--A", dest="a", default="x", help="operator JSON, or x / p with --oscillator")
    p.add_argument("--f", help="also report the metric adjusted skew information for this f")
    _add_output_args(p)

    p = sub.add_parser("uncertainty", help="U_alpha(A) U_alpha(B) vs alpha(1-alpha)|<[A,B]>|^2")
    _add_state_args(p)
    p.add_argument("--oscillator", help="m,omega,beta; uses A = x, B = p")
    p.add_argument("--alpha", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
                   help="comma list or min:max:count")
    p.add_argument("--A", dest="a", help="operator JSON")
    p.add_argument("--B", dest="b", help="operator JSON")
    p.add_argument("--out", help="CSV output (default stdout)")

    p = sub.add_parser("simulate", help="driven virtual experiment")
    _add_state_args(p, allow_rho=False)
    p.add_argument("--probe", required=True, help="driven operator A (operator JSON)")
    p.add_argument("--observe", help="observed operator (default: the probe)")
    p.add_argument("--omega-grid", required=True, help="min:max:count")
    p.add_argument("--amplitude", type=float, default=1e-3)
    p.add_argument("--observable", choices=("current", "displacement"), default="current")
    p.add_argument("--certify", action="store_true", help="run the amplitude-halving linearity check")
    p.add_argument("--out", help="spectrum CSV output (default stdout)")

    p = sub.add_parser("oscillator", help="thermal oscillator closed forms")
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--hbar", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--levels", type=int, help="Fock levels for --numeric")
    p.add_argument("--numeric", action="store_true", help="compare with the truncated Fock realization")
    _add_output_args(p)

    p = sub.add_parser("probe-field", help="field A with J_A equal to the logarithmic derivative")
    _add_state_args(p, allow_rho=False)
    p.add_argument("--f", default="sld")
    p.add_argument("--generator", required=True)
    p.add_argument("--out", help="operator JSON output (default stdout)")
    return parser


def _thermal(args):
    if not args.h or args.beta is None:
        raise ValidationError("need --h and --beta")
    return thermal_state(read_operator(args.h, "H"), args.beta, hbar=args.hbar)


def _state(args):
    if getattr(args, "state", None):
        return DensityMatrix(read_operator(args.state, "rho").matrix)
    return _thermal(args)


def _oscillator(text: str, hbar: float = 1.0, levels: Optional[int] = None) -> OscillatorSpec:
    try:
        m, omega, beta = (float(x) for x in text.split(","))
    except ValueError:
        raise ValidationError(f"--oscillator expects m,omega,beta, got {text!r}") from None
    return OscillatorSpec(mass=m, omega=omega, beta=beta, hbar=hbar, levels=levels)


def _config(args, inputs: dict) -> RunConfig:
    return RunConfig(
        subcommand=args.command,
        inputs=tuple(sorted((k, str(v)) for k, v in inputs.items() if v is not None)),
        f=getattr(args, "f", None) or "",
        beta=getattr(args, "beta", None),
        hbar=getattr(args, "hbar", 1.0),
        eta=getattr(args, "eta", None) or None,
        grid=getattr(args, "omega_grid", None),
        output=getattr(args, "report", None) or getattr(args, "out", None),
    )


def _finish(report: Report, args) -> None:
    text = write_report(report, args.report)
    if not args.report:
        sys.stdout.write(text)
    if args.docx:
        export_docx(report, args.docx)


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_compute(args) -> None:
    f = parse_function(args.f)
    state = _state(args)
    result = qfi_unitary_model(state, f, read_operator(args.generator, "B"))
    report = Report(_config(args, {"h": args.h, "state": args.state, "generator": args.generator}))
    report.add("J", result.value)
    report.diagnostics.update({"method": result.method, "is_standard": result.is_standard, **result.diagnostics})
    _finish(report, args)


def cmd_fdt_check(args) -> None:
    f = parse_function(args.f)
    state = _thermal(args)
    a = read_operator(args.a, "A_mu")
    b = read_operator(args.b, "A_nu") if args.b else None
    fdt = check_gfdt(state, f, a, b, kind=args.kind)
    report = Report(_config(args, {"h": args.h, "A": args.a, "B": args.b}))
    report.add("max_deviation", fdt.max_deviation, 1e-10)
    report.add("passed", fdt.passed)
    report.add("static_covariance", fdt.static_covariance)
    report.diagnostics["lines"] = [
        {"omega": float(w), "ratio": r, "predicted": p}
        for w, r, p in zip(fdt.omegas, fdt.ratios, fdt.predicted)
        if np.isfinite(p)
    ]
    report.diagnostics["skipped_omegas"] = fdt.skipped_omegas
    _finish(report, args)


def cmd_reconstruct(args) -> None:
    f = parse_function(args.f)
    kind = "response" if args.kind == "current" else "displacement-response"
    if args.chi:
        chi = read_spectrum(args.chi, eta=args.eta, kind=kind)
        chi_nu = read_spectrum(args.chi_nu, eta=args.eta, kind=kind) if args.chi_nu else None
    else:
        chi = parse_lines(Path(args.lines).read_text(encoding="utf-8"), kind, args.beta, args.hbar, args.lines)
        chi_nu = (
            parse_lines(Path(args.chi_nu).read_text(encoding="utf-8"), kind, args.beta, args.hbar, args.chi_nu)
            if args.chi_nu else None
        )
    if args.kind == "current":
        result = covariance_from_admittance(chi, chi_nu, f, args.beta, args.hbar)
    elif args.kind == "displacement":
        result = covariance_from_susceptibility(chi, chi_nu, f, args.beta, args.hbar)
    else:
        if chi_nu is not None:
            raise ValidationError("qfi reconstruction uses the self-susceptibility only")
        result = qfi_from_susceptibility(chi, f, args.beta, args.hbar)
    report = Report(_config(args, {"chi": args.chi, "lines": args.lines, "chi_nu": args.chi_nu}))
    report.add("value", result.value, result.error_estimate)
    report.add("truncation_error", result.truncation_error)
    report.diagnostics.update(
        {"method": result.method, "kind": result.kind, "grid_points": result.grid_points,
         "cutoff": result.cutoff, "flags": list(result.flags), **result.diagnostics}
    )
    _finish(report, args)


def cmd_skew(args) -> None:
    if args.oscillator:
        spec = _oscillator(args.oscillator, args.hbar)
        state = spec.thermal(check=True)
        if args.a not in ("x", "p"):
            raise ValidationError("with --oscillator, --A must be x or p")
        a = spec.position() if args.a == "x" else spec.momentum()
    else:
        state = _state(args)
        a = read_operator(args.a, "A")
    report = Report(_config(args, {"h": args.h, "state": args.state, "oscillator": args.oscillator, "A": args.a}))
    direct = wyd_skew_direct(state, args.alpha, a)
    report.add("skew_direct", direct.value)
    report.add("skew_via_qfi", wyd_skew_via_qfi(state, args.alpha, a).value, 1e-10)
    report.add("variance", variance(state, a))
    report.add("uncertainty", uncertainty_quantity(state, args.alpha, a))
    if args.f:
        report.add("metric_adjusted_skew", metric_adjusted_skew(state, parse_function(args.f), a).value)
    report.diagnostics["alpha"] = args.alpha
    _finish(report, args)


def _alphas(text: str) -> np.ndarray:
    if ":" in text:
        return parse_grid(text)
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise ValidationError(f"--alpha expects a comma list or min:max:count, got {text!r}") from None


def cmd_uncertainty(args) -> None:
    if args.oscillator:
        spec = _oscillator(args.oscillator, args.hbar)
        state, a, b = spec.thermal(check=True), spec.position(), spec.momentum()
    else:
        if not (args.a and args.b):
            raise ValidationError("need --A and --B (or --oscillator)")
        state = _state(args)
        a, b = read_operator(args.a, "A"), read_operator(args.b, "B")
    rows = ["alpha,lhs,rhs,gap,satisfied"]
    for alpha in _alphas(args.alpha):
        r = yanagi_check(state, float(alpha), a, b)
        rows.append(
            f"{format_float(alpha)},{format_float(r.lhs)},{format_float(r.rhs)},"
            f"{format_float(r.gap)},{str(r.satisfied).lower()}"
        )
    _emit("\n".join(rows) + "\n", args.out)


def cmd_simulate(args) -> None:
    state = _thermal(args)
    probe = read_operator(args.probe, "A")
    observe = read_operator(args.observe, "A_mu") if args.observe else None
    grid = parse_grid(args.omega_grid)
    spectrum, runs = measure_spectrum(
        state, probe, grid, args.amplitude, observe=observe, observable=args.observable, certify=args.certify
    )
    for r in runs:
        logger.info("omega=%g chi=%s residual=%.2e linearity=%s", r.omega, r.chi_hat, r.residual, r.linearity)
    _emit(dump_spectrum_csv(spectrum.grid, spectrum.values), args.out)


def cmd_oscillator(args) -> None:
    spec = OscillatorSpec(mass=args.m, omega=args.omega, beta=args.beta, hbar=args.hbar, levels=args.levels)
    oracle = oscillator_oracle(spec, args.alpha, numeric=args.numeric)
    report = Report(_config(args, {}))
    report.add("I_x", oracle.i_x)
    report.add("I_p", oracle.i_p)
    report.add("variance_x", oracle.variance_x)
    report.add("variance_p", oracle.variance_p)
    report.add("lhs", oracle.lhs)
    report.add("rhs", oracle.rhs)
    report.add("gap", oracle.gap)
    if args.numeric:
        report.add("numeric_I_x", oracle.numeric_i_x, abs(oracle.numeric_i_x - oracle.i_x))
        report.add("numeric_I_p", oracle.numeric_i_p, abs(oracle.numeric_i_p - oracle.i_p))
        report.diagnostics["levels"] = spec.levels
    report.diagnostics["alpha"] = args.alpha
    _finish(report, args)


def cmd_probe_field(args) -> None:
    f = parse_function(args.f)
    state = _thermal(args)
    a = solve_probe_field(state, f, read_operator(args.generator, "B"))
    _emit(dump_operator(a), args.out)


COMMANDS = {
    "compute": cmd_compute,
    "fdt-check": cmd_fdt_check,
    "reconstruct": cmd_reconstruct,
    "skew": cmd_skew,
    "uncertainty": cmd_uncertainty,
    "simulate": cmd_simulate,
    "oscillator": cmd_oscillator,
    "probe-field": cmd_probe_field,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logger.info("threads capped at %d", settings.thread_cap())
    try:
        COMMANDS[args.command](args)
    except QfiError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except OSError as e:
        print(f"error: Failed to read or write a file: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
