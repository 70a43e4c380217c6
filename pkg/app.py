import streamlit as st
import numpy as np
from modules.covariance import qfi_unitary_model
from modules.errors import QfiError
from modules.fdt_reconstruction import (
    check_gfdt,
    covariance_from_admittance,
    qfi_from_susceptibility,
    reconstruct_from_lines_at_etas,
)
from modules.io_formats import dump_spectrum_csv, parse_operator, parse_spectrum_csv
from modules.linear_response import response_lines
from modules.monotone_functions import CATALOG, parse_function
from modules.oscillator import OscillatorSpec
from modules.reporting import Report, RunConfig, export_docx
from modules.skew_information import oscillator_oracle, wyd_skew_direct, yanagi_check
from modules.spectral_core import thermal_state


st.set_page_config(
    page_title="QFI Response Lab",
    page_icon="📈",
    layout="wide"
)

neo_brutal_css = """
<style>
    @import url('https://fonts.googleapis.com/css2?family=Space+Grotesk:wght@700&display=swap');

    * {
        font-family: 'Space Grotesk', sans-serif;
    }

    [data-testid="stAppViewContainer"] {
        background-color: #1a1a1a;
        color: #ffffff;
    }

    .main-title {
        font-weight: 700;
        font-size: 3rem;
        color: #000000;
        text-shadow: 4px 4px 0px #FF006E;
        border: 6px solid #000000;
        padding: 20px;
        background-color: #FFBE0B;
        margin-bottom: 30px;
        box-shadow: 8px 8px 0px #000000;
        text-align: center;
        display: block;
    }

    .section-wrapper {
        border: 5px solid #000000;
        padding: 25px;
        margin: 20px 0;
        background-color: #8338EC;
        box-shadow: 6px 6px 0px #000000;
    }

    .section-wrapper h3 {
        color: #FFFFFF;
        font-weight: 700;
        font-size: 1.8rem;
        margin: 0 0 15px 0;
    }

    .info-box, .success-box, .warning-box, .error-box {
        border: 4px solid #000000;
        padding: 15px;
        margin: 10px 0;
        box-shadow: 4px 4px 0px #000000;
        font-weight: 600;
        color: #000000;
    }
    .info-box { background-color: #06FFA5; }
    .success-box { background-color: #06FFA5; }
    .warning-box { background-color: #FFD60A; }
    .error-box { background-color: #FF006E; color: #FFFFFF; }
</style>
"""


def box(kind: str, text: str) -> None:
    st.markdown(f'<div class="{kind}-box">{text}</div>', unsafe_allow_html=True)


def section(title: str) -> None:
    st.markdown(f'<div class="section-wrapper"><h3>{title}</h3></div>', unsafe_allow_html=True)


st.markdown(neo_brutal_css, unsafe_allow_html=True)
st.markdown('<div class="main-title">📈 QFI Response Lab</div>', unsafe_allow_html=True)

if "report" not in st.session_state:
    st.session_state.report = None

section("⚙️ Section 1: System")
source = st.radio("System", ["Qubit example", "Thermal oscillator", "Upload H and B (operator JSON)"], horizontal=True)
cols = st.columns(3)
beta = cols[0].number_input("beta", min_value=1e-6, value=1.0, format="%.6g")
f_name = cols[1].selectbox("monotone function", list(CATALOG) + ["wyd:0.3"], index=0)
alpha = cols[2].slider("WYD alpha", min_value=0.05, max_value=0.95, value=0.5, step=0.05)

state = generator = spec = None
try:
    if source == "Qubit example":
        gap = st.number_input("level splitting", min_value=1e-6, value=1.0)
        state = thermal_state(np.diag([0.0, gap]), beta)
        generator = np.array([[0, 1], [1, 0]], dtype=complex)
    elif source == "Thermal oscillator":
        c = st.columns(2)
        mass = c[0].number_input("mass", min_value=1e-6, value=1.0)
        omega = c[1].number_input("omega", min_value=1e-6, value=1.0)
        spec = OscillatorSpec(mass=mass, omega=omega, beta=beta)
        state = spec.thermal(check=True)
        generator = spec.position()
    else:
        h_file = st.file_uploader("Hamiltonian H", type=["json"], key="h")
        b_file = st.file_uploader("Generator B", type=["json"], key="b")
        if h_file and b_file:
            state = thermal_state(parse_operator(h_file.read().decode("utf-8"), "H"), beta)
            generator = parse_operator(b_file.read().decode("utf-8"), "B")
    f = parse_function(f_name)
except QfiError as e:
    box("error", f"❌ {e}")
    st.stop()

if state is None:
    box("warning", "⚠️ Upload H and B to begin")
    st.stop()

section("🧮 Section 2: QFI and generalized FDT")
eta = st.number_input("broadening eta for the quadrature path", min_value=1e-4, value=0.05, format="%.4g")
if st.button("Compute", key="compute_btn"):
    try:
        qfi = qfi_unitary_model(state, f, generator)
        fdt = check_gfdt(state, f, generator, kind="displacement")
        box("success", f"✅ J = {qfi.value:.12g} ({f.name})")
        verdict = "passed" if fdt.passed else "FAILED"
        box("info" if fdt.passed else "warning", f"gFDT {verdict}: max deviation {fdt.max_deviation:.3e}")

        lines = response_lines(state, generator, generator, kind="displacement")
        discrete = qfi_from_susceptibility(lines, f, state.beta, state.hbar)
        box("info", f"susceptibility path (discrete sum): {discrete.real:.12g}")

        report = Report(RunConfig(subcommand="compute", f=f.name, beta=state.beta))
        report.add("J", qfi.value)
        report.add("J_susceptibility", discrete.value)
        report.add("fdt_max_deviation", fdt.max_deviation, 1e-10)
        if f.is_standard:
            extrapolated = reconstruct_from_lines_at_etas(lines, f, "qfi", eta)
            box("info", f"quadrature at eta={eta:g}, extrapolated: {extrapolated.real:.8g} "
                        f"(± {extrapolated.error_estimate:.1e})")
            report.add("J_quadrature", extrapolated.value, extrapolated.error_estimate)
        if spec is not None:
            oracle = oscillator_oracle(spec, alpha)
            numeric = wyd_skew_direct(state, alpha, spec.position()).value
            check = yanagi_check(state, alpha, spec.position(), spec.momentum())
            box("info", f"I_alpha(x): closed form {oracle.i_x:.10g}, Fock {numeric:.10g}; "
                        f"Yanagi gap {check.gap:.3e}")
            report.add("I_x", oracle.i_x, abs(numeric - oracle.i_x))
            report.add("yanagi_gap", check.gap)
        st.session_state.report = report
    except QfiError as e:
        box("error", f"❌ Error: {e}")

section("📡 Section 3: Reconstruct from a measured admittance")
chi_file = st.file_uploader("Admittance spectrum CSV (omega,re,im)", type=["csv"], key="chi")
if chi_file:
    try:
        chi = parse_spectrum_csv(chi_file.read().decode("utf-8"), source=chi_file.name)
        result = covariance_from_admittance(chi, None, f, beta)
        box("success", f"✅ <J,J>^f = {result.real:.10g} ± {result.error_estimate:.2e} ({result.method})")
        for flag in result.flags:
            box("warning", f"⚠️ {flag}")
        st.line_chart({"Re chi": chi.values.real, "Im chi": chi.values.imag})
        st.download_button(
            label="📥 Download spectrum CSV",
            data=dump_spectrum_csv(chi.grid, chi.values),
            file_name="chi.csv",
            mime="text/csv",
        )
    except QfiError as e:
        box("error", f"❌ Error: {e}")

if st.session_state.get("report"):
    section("💾 Section 4: Download Report")
    report = st.session_state.report
    st.download_button(
        label="📥 Download JSON report",
        data=report.to_json(),
        file_name="qfi_report.json",
        mime="application/json",
    )
    st.download_button(
        label="📥 Download DOCX report",
        data=export_docx(report),
        file_name="qfi_report.docx",
        mime="application/vnd.openxmlformats-officedocument.wordprocessingml.document",
    )
    with st.expander("🔍 View report"):
        st.code(report.to_json(), language="json")
