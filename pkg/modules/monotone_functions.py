"""
Operator monotone functions f with f(1) = 1.

Every function is evaluated through its log-domain form u -> f(e^u), which is
what the kernel tables need: population ratios arrive as differences of
log-populations. Closed forms with a removable singularity at x = 1 switch to
a series in u when |x - 1| < 1e-4.

Catalog: sld, bkm, rld, lld, harmonic, wy, geometric and the wyd(alpha) family.
User functions are accepted as `expr:` strings over x with + - * / ^ log exp sqrt.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Union

import numpy as np
from scipy.special import expit
import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from modules import settings
from modules.errors import ValidationError

logger = logging.getLogger(__name__)

Scalar = Union[float, np.ndarray]

SAMPLE_GRID = np.logspace(-8, 8, 161)
DUALITY_GRID = np.logspace(-6, 6, 100)


@dataclass(frozen=True)
class KernelFunction:
    """A positive weight x -> k(x) on (0, inf), evaluated through u = log x."""

    name: str
    log_form: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def eval_log(self, u: Scalar) -> Scalar:
        u_arr = np.asarray(u, dtype=float)
        out = self.log_form(u_arr)
        return out if np.ndim(u) else float(out)

    def eval(self, x: Scalar) -> Scalar:
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr <= 0):
            raise ValidationError(f"{self.name}: evaluation needs x > 0")
        return self.eval_log(np.log(x_arr) if np.ndim(x) else float(np.log(x_arr)))

    def __call__(self, x: Scalar) -> Scalar:
        return self.eval(x)


@dataclass(frozen=True)
class MonotoneFunction(KernelFunction):
    f_at_zero: float = 0.0
    is_standard: bool = False
    catalog: bool = False
    expression: str = ""
    # set on functions built by dual(): the function they are the dual of
    dual_of: Optional["MonotoneFunction"] = field(default=None, repr=False, compare=False)


# ---------------------------------------------------------------------------
# stable pieces
# ---------------------------------------------------------------------------

def _log_sinhc_series(u: np.ndarray) -> np.ndarray:
    """log((e^u - 1)/u) near u = 0."""
    u2 = u * u
    return u / 2 + u2 / 24 - u2 * u2 / 2880 + u2 * u2 * u2 / 181440


def _log_abs_expm1(u: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        pos = u + np.log1p(-np.exp(-np.abs(u)))
        neg = np.log1p(-np.exp(-np.abs(u)))
    return np.where(u > 0, pos, neg)


def _near_one(u: np.ndarray) -> np.ndarray:
    return np.abs(np.expm1(u)) < settings.SERIES_SWITCH


def _bkm(u: np.ndarray) -> np.ndarray:
    small = _near_one(u)
    safe = np.where(small, 1.0, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.exp(_log_abs_expm1(safe) - np.log(np.abs(safe)))
    return np.where(small, np.exp(_log_sinhc_series(u)), direct)


def _wyd_form(alpha: float) -> Callable[[np.ndarray], np.ndarray]:
    a, b = alpha, 1.0 - alpha
    c2 = (2 - a**2 - b**2) / 24
    c4 = -(2 - a**4 - b**4) / 2880
    c6 = (2 - a**6 - b**6) / 181440
    log_ab = np.log(a * b)

    def form(u: np.ndarray) -> np.ndarray:
        small = _near_one(u)
        safe = np.where(small, 1.0, u)
        direct = log_ab + 2 * _log_abs_expm1(safe) - _log_abs_expm1(a * safe) - _log_abs_expm1(b * safe)
        u2 = u * u
        series = u / 2 + c2 * u2 + c4 * u2 * u2 + c6 * u2 * u2 * u2
        return np.exp(np.where(small, series, direct))

    return form


def _sld(u):
    return (np.exp(u) + 1.0) / 2.0


def _rld(u):
    return np.exp(u)


def _lld(u):
    return np.ones_like(u, dtype=float)


def _harmonic(u):
    return 2.0 * expit(u)


def _wy(u):
    return (np.exp(u / 2.0) + 1.0) ** 2 / 4.0


def _geometric(u):
    return np.exp(u / 2.0)


SLD = MonotoneFunction("sld", _sld, f_at_zero=0.5, is_standard=True, catalog=True)
BKM = MonotoneFunction("bkm", _bkm, f_at_zero=0.0, is_standard=True, catalog=True)
RLD = MonotoneFunction("rld", _rld, f_at_zero=0.0, is_standard=False, catalog=True)
LLD = MonotoneFunction("lld", _lld, f_at_zero=1.0, is_standard=False, catalog=True)
HARMONIC = MonotoneFunction("harmonic", _harmonic, f_at_zero=0.0, is_standard=True, catalog=True)
WY = MonotoneFunction("wy", _wy, f_at_zero=0.25, is_standard=True, catalog=True)
GEOMETRIC = MonotoneFunction("geometric", _geometric, f_at_zero=0.0, is_standard=True, catalog=True)

CLASSIC_FUNCTIONS = (SLD, BKM, RLD, LLD, HARMONIC, WY)

CATALOG: Dict[str, MonotoneFunction] = {f.name: f for f in CLASSIC_FUNCTIONS + (GEOMETRIC,)}


def wyd(alpha: float) -> MonotoneFunction:
    """
    Wigner-Yanase-Dyson function
    f_alpha(x) = alpha(1-alpha)(x-1)^2 / ((x^alpha - 1)(x^(1-alpha) - 1)).

    Args:
        alpha: family parameter in (0, 1)

    Returns:
        Standard monotone function with f_alpha(0) = alpha(1-alpha)
    """
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"wyd parameter must lie in (0, 1), got {alpha}")
    return MonotoneFunction(
        f"wyd:{alpha:g}",
        _wyd_form(float(alpha)),
        f_at_zero=alpha * (1.0 - alpha),
        is_standard=True,
        catalog=True,
    )


# ---------------------------------------------------------------------------
# duality and derived weights
# ---------------------------------------------------------------------------

_DUAL_NAMES = {"rld": LLD, "lld": RLD}


def dual(f: MonotoneFunction) -> MonotoneFunction:
    """
    Dual function f~(x) = x f(1/x).

    Standard catalog members are their own duals; rld and lld swap.
    """
    if f.catalog and f.is_standard:
        return f
    if f.catalog and f.name in _DUAL_NAMES:
        return _DUAL_NAMES[f.name]
    if f.dual_of is not None:
        return f.dual_of

    def form(u: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(u) * f.log_form(-u)

    return MonotoneFunction(
        f"dual({f.name})",
        form,
        f_at_zero=_probe_zero(form, f"dual({f.name})"),
        is_standard=f.is_standard,
        dual_of=f,
    )


def _dual_log_form(f: KernelFunction) -> Callable[[np.ndarray], np.ndarray]:
    if getattr(f, "is_standard", False):
        return f.log_form
    if isinstance(f, MonotoneFunction):
        return dual(f).log_form

    def form(u: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(u) * f.log_form(-u)

    return form


def standardness_defect(f: KernelFunction, grid: np.ndarray = SAMPLE_GRID) -> float:
    """max |f(x) - x f(1/x)| / max(1, |f(x)|) over the grid."""
    u = np.log(grid)
    fx = f.log_form(u)
    fd = np.exp(u) * f.log_form(-u)
    return float(np.max(np.abs(fx - fd) / np.maximum(1.0, np.abs(fx))))


def fdt_coefficient(f: KernelFunction, alpha: Scalar) -> Scalar:
    """
    Generalized FDT coefficient c_f(alpha) = f(e^-alpha) / (1 - e^-alpha), alpha = beta hbar omega.

    Args:
        f: monotone function
        alpha: dimensionless frequency, nonzero

    Returns:
        The coefficient (scalar or array like alpha)
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(a == 0):
        raise ValidationError("coefficient singular at zero frequency")
    # for alpha < 0: c_f(alpha) = -f~(e^alpha) / (1 - e^alpha), so both branches
    # only ever evaluate at t = -|alpha| <= 0
    t = -np.abs(a)
    denom = -np.expm1(t)
    out = np.where(a > 0, f.log_form(t), -_dual_log_form(f)(t)) / denom
    return out if np.ndim(alpha) else float(out)


def generalized_mean(f: MonotoneFunction, nbar: float) -> float:
    """(nbar + 1) f(nbar / (nbar + 1)); the nbar = 0 limit is f(0+)."""
    if nbar < 0:
        raise ValidationError(f"nbar must be >= 0, got {nbar}")
    if nbar == 0:
        return float(f.f_at_zero)
    u = -np.log1p(1.0 / nbar)
    return float((nbar + 1.0) * f.log_form(np.asarray(u)))


def classical_limit_spread(alpha: float, functions=None) -> float:
    """Spread of alpha * c_f(alpha) over a set of functions (catalog by default)."""
    functions = functions or list(CATALOG.values())
    values = [alpha * fdt_coefficient(f, alpha) for f in functions]
    return float(max(values) - min(values))


def qfi_to_covariance_function(f: MonotoneFunction) -> KernelFunction:
    """g(x) = (x - 1)^2 / f(x), the covariance weight of the unitary-model QFI."""

    def form(u: np.ndarray) -> np.ndarray:
        return np.expm1(u) ** 2 / f.log_form(u)

    return KernelFunction(f"(x-1)^2/{f.name}", form)


# ---------------------------------------------------------------------------
# user expressions
# ---------------------------------------------------------------------------

_X = sp.Symbol("x", positive=True)
_ALLOWED_FUNCS = {"log": sp.log, "exp": sp.exp, "sqrt": sp.sqrt}
_PARSE_GLOBALS = {
    "Integer": sp.Integer,
    "Float": sp.Float,
    "Rational": sp.Rational,
    "Symbol": sp.Symbol,
    "Function": sp.Function,
}


def _probe_zero(form: Callable[[np.ndarray], np.ndarray], name: str) -> float:
    lo = float(form(np.asarray(np.log(settings.F_ZERO_PROBE))))
    hi = float(form(np.asarray(np.log(settings.F_ZERO_CHECK))))
    if abs(lo - hi) > 1e-6 * max(1.0, abs(lo)):
        logger.warning("%s: f(0+) estimate %.6g not converged (f(1e-10) = %.6g)", name, lo, hi)
    return 0.0 if abs(lo) < 1e-9 else lo


def _parse(expression: str) -> sp.Expr:
    try:
        expr = parse_expr(
            expression,
            local_dict={"x": _X, **_ALLOWED_FUNCS},
            global_dict=dict(_PARSE_GLOBALS),
            transformations=standard_transformations + (convert_xor,),
        )
    except Exception as e:
        raise ValidationError(f"Failed to parse function expression {expression!r}: {str(e)}")
    if not isinstance(expr, sp.Expr):
        raise ValidationError(f"expression {expression!r} is not arithmetic")
    extra = expr.free_symbols - {_X}
    if extra:
        raise ValidationError(f"expression {expression!r} uses unknown symbols {sorted(map(str, extra))}")
    for node in expr.atoms(sp.Function):
        if node.func not in (sp.log, sp.exp):
            raise ValidationError(f"expression {expression!r} uses unsupported function {node.func}")
    return expr


def from_expression(expression: str, name: Optional[str] = None) -> MonotoneFunction:
    """
    Build a MonotoneFunction from a closed-form expression in x.

    Only scalar necessary conditions are checked (normalization, positivity,
    monotonicity on a log grid); operator monotonicity is trusted.
    """
    expr = _parse(expression)
    direct = sp.lambdify(_X, expr, modules="numpy")
    taylor = sp.series(expr, _X, 1, 4).removeO()
    near = sp.lambdify(_X, taylor, modules="numpy")

    def form(u: np.ndarray) -> np.ndarray:
        x = np.exp(np.asarray(u, dtype=float))
        small = np.abs(x - 1.0) < settings.SERIES_SWITCH
        with np.errstate(all="ignore"):
            far = np.broadcast_to(np.asarray(direct(np.where(small, 2.0, x)), dtype=float), x.shape)
            close = np.broadcast_to(np.asarray(near(x), dtype=float), x.shape)
        return np.where(small, close, far)

    label = name or f"expr:{expression}"
    at_one = float(form(np.asarray(0.0)))
    if abs(at_one - 1.0) > 1e-12:
        raise ValidationError(f"{label}: f(1) = {at_one:.15g}, expected 1")
    values = form(np.log(SAMPLE_GRID))
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ValidationError(f"{label}: f must be finite and positive on [1e-8, 1e8]")
    steps = np.diff(values)
    if np.any(steps < -1e-12 * np.maximum(1.0, np.abs(values[1:]))):
        raise ValidationError(f"{label}: f is not nondecreasing on the sample grid")

    probe = KernelFunction(label, form)
    standard = standardness_defect(probe) <= 1e-12
    return MonotoneFunction(
        label,
        form,
        f_at_zero=_probe_zero(form, label),
        is_standard=standard,
        expression=expression,
    )


def parse_function(spec: str) -> MonotoneFunction:
    """
    Resolve a --f argument: catalog name, `wyd:ALPHA` or `expr:...`.
    """
    text = spec.strip()
    key = text.lower()
    if key in CATALOG:
        return CATALOG[key]
    if key.startswith("wyd:"):
        try:
            alpha = float(text.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"wyd parameter is not a number: {text!r}")
        return wyd(alpha)
    if key.startswith("expr:"):
        return from_expression(text.split(":", 1)[1].strip().strip('"'))
    names = ", ".join(list(CATALOG) + ["wyd:ALPHA", "expr:..."])
    raise ValidationError(f"unknown function {spec!r}; choose one of: {names}")
