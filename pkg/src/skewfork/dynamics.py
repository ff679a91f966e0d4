"""Right-hand sides of the scalar families and a guarded adaptive flow map.

Two forms are supported:

* cubic: ``x' = -a3 x^3 + (a2 + mu) x^2 + (a1 + lam) x``;
* general: ``x' = (-a3 + h(t, x)) x^3 + (a2 + mu) x^2 + (a1 + lam) x`` with a
  symbolic ``h`` vanishing at ``x = 0``.

Coefficients are referenced by id in the driver, or given as plain numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
import sympy
from numba import njit

from . import _kernel
from . import base_flow as bf
from .errors import BlowUp, ConfigInvalid, NotCoercive, StepUnderflow, SymbolicDriver

CoefRef = Union[str, float]
GUARD_FACTOR = 1e3
MAX_STEPS = 200_000_000
# per-step error target relative to the requested accuracy, so that global
# errors over moderate horizons stay below tol
STEP_TOL_FACTOR = 0.1


@dataclass(frozen=True)
class Cubic:
    a3: CoefRef = "a3"
    a2: CoefRef = "a2"
    a1: CoefRef = "a1"


@dataclass(frozen=True)
class HTerm:
    """Symbolic perturbation ``h(t, x)`` of the cubic coefficient.

    ``expression`` is parsed with sympy in the variable ``x`` and any driver
    coefficient ids. ``certified`` optionally holds ``(rho0, eps0, m)``.
    """

    expression: str
    certified: tuple | None = None
    _compiled: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        expr = self.sym
        if sympy.simplify(expr.subs(self.x_symbol, 0)) != 0:
            raise ValueError("h must vanish at x = 0")

    @property
    def x_symbol(self):
        return sympy.Symbol("x")

    @property
    def sym(self):
        if "sym" not in self._compiled:
            self._compiled["sym"] = sympy.sympify(self.expression, locals={"x": self.x_symbol})
        return self._compiled["sym"]

    @property
    def coefficient_ids(self) -> tuple[str, ...]:
        return tuple(sorted(s.name for s in self.sym.free_symbols if s.name != "x"))

    def _lambdas(self, module: str):
        key = ("lam", module)
        if key not in self._compiled:
            syms = [self.x_symbol] + [sympy.Symbol(c) for c in self.coefficient_ids]
            h = sympy.lambdify(syms, self.sym, module)
            hx = sympy.lambdify(syms, sympy.diff(self.sym, self.x_symbol), module)
            self._compiled[key] = (h, hx)
        return self._compiled[key]

    def values(self, driver: bf.Driver, t, x):
        """``(h, h_x)`` at time t and state x."""
        coeffs = [bf.eval(driver, c, t) for c in self.coefficient_ids]
        h, hx = self._lambdas("numpy")
        return h(x, *coeffs) + 0.0 * np.asarray(x), hx(x, *coeffs) + 0.0 * np.asarray(x)

    def check_certificate(self, driver: bf.Driver, samples: int = 2000, seed: int = 0) -> bool:
        """Spot-check ``|h| <= eps0`` on ``|x| <= rho0`` at random sample points."""
        if self.certified is None:
            return False
        rho0, eps0, _ = self.certified
        rng = np.random.default_rng(seed)
        t = rng.uniform(0.0, 200.0, samples)
        x = rng.uniform(-rho0, rho0, samples)
        h, _ = self.values(driver, t, x)
        return bool(np.all(np.abs(h) <= eps0))


@dataclass(frozen=True)
class GeneralH:
    a3: CoefRef = "a3"
    a2: CoefRef = "a2"
    a1: CoefRef = "a1"
    h: HTerm = None


@dataclass(frozen=True)
class Family:
    form: Union[Cubic, GeneralH] = field(default_factory=Cubic)
    lam: float = 0.0
    mu: float = 0.0
    linear_test_mode: bool = False

    def with_params(self, lam: float | None = None, mu: float | None = None) -> "Family":
        return replace(self, lam=self.lam if lam is None else float(lam),
                       mu=self.mu if mu is None else float(mu))


def coef_fn(driver: bf.Driver, ref: CoefRef):
    if isinstance(ref, str):
        return driver.coefficient(ref)
    if isinstance(ref, (bf.Constant, bf.TrigSeries, bf.LogComposite, bf.TableEntry)):
        return ref
    return bf.Constant(float(ref))


def _coef_values(driver: bf.Driver, ref: CoefRef, t):
    fn = coef_fn(driver, ref)
    if driver.is_symbolic:
        raise SymbolicDriver("symbolic drivers have no trajectories")
    if isinstance(fn, bf.Constant):
        return fn.value + 0.0 * np.asarray(t, dtype=float)
    return bf.eval(driver, fn, t)


# ---------------------------------------------------------------------------
# pointwise right-hand side


def rhs(family: Family, driver: bf.Driver, t, x):
    """Value of the right-hand side; exactly zero at ``x = 0``."""
    form = family.form
    a1 = _coef_values(driver, form.a1, t) + family.lam
    if family.linear_test_mode:
        return a1 * x
    a3 = _coef_values(driver, form.a3, t)
    a2 = _coef_values(driver, form.a2, t) + family.mu
    lead = -a3
    if isinstance(form, GeneralH):
        h, _ = form.h.values(driver, t, x)
        lead = lead + h
    return ((lead * x + a2) * x + a1) * x


def rhs_x(family: Family, driver: bf.Driver, t, x):
    """Exact partial derivative of :func:`rhs` in x."""
    form = family.form
    a1 = _coef_values(driver, form.a1, t) + family.lam
    if family.linear_test_mode:
        return a1 + 0.0 * np.asarray(x)
    a3 = _coef_values(driver, form.a3, t)
    a2 = _coef_values(driver, form.a2, t) + family.mu
    out = (-3.0 * a3 * x + 2.0 * a2) * x + a1
    if isinstance(form, GeneralH):
        h, hx = form.h.values(driver, t, x)
        out = out + hx * x**3 + 3.0 * h * x**2
    return out


# ---------------------------------------------------------------------------
# packing for the compiled kernel


def _pack(driver: bf.Driver, fns: list):
    k = len(driver.frequencies)
    canon = [bf.canonical(driver, fn) for fn in fns]
    n = max([max(g.n, e.n) for g, e in canon] + [1])
    slots = len(canon)
    means = np.zeros((slots, 2))
    cs = np.zeros((slots, 2, k, n))
    sn = np.zeros((slots, 2, k, n))
    nh = np.zeros((slots, 2), dtype=np.int64)
    for i, (g, e) in enumerate(canon):
        for j, ser in enumerate((g, e)):
            means[i, j] = ser.mean
            if ser.n and not ser.is_constant():
                cs[i, j, :, : ser.n] = ser.c
                sn[i, j, :, : ser.n] = ser.s
                nh[i, j] = ser.n
    omega = np.ascontiguousarray(driver.frequencies, dtype=float)
    phase = np.ascontiguousarray(driver.phases + omega * driver.offset, dtype=float)
    return omega, phase, means, cs, sn, nh


def _max_step(driver: bf.Driver, nh: np.ndarray) -> float:
    omega = np.abs(driver.frequencies)
    if not np.any(omega) or not np.any(nh):
        return math.inf
    top = float(omega.max()) * max(1, int(nh.max()))
    return (2.0 * math.pi / top) / 8.0


_GENERAL_TEMPLATE = """
def rhs(mode, t, x, y, args):
    lam = args[6]
    mu = args[7]
    linear = args[8]
    if mode == 2:
        return 0.0, coefficient(3, t, args)
    a1 = coefficient(2, t, args) + lam
    if linear:
        return a1 * x, a1
    a3 = coefficient(0, t, args)
    a2 = coefficient(1, t, args) + mu
    h = H(x{extra})
    lead = -a3 + h
    f = ((lead * x + a2) * x + a1) * x
    if mode == 1:
        hx = HX(x{extra})
        return f, hx * x * x * x + (3.0 * lead * x + 2.0 * a2) * x + a1
    return f, 0.0
"""


def _general_rhs(hterm: HTerm):
    key = ("numba",)
    if key not in hterm._compiled:
        h, hx = hterm._lambdas("math")
        extra = "".join(f", coefficient({4 + i}, t, args)" for i in range(len(hterm.coefficient_ids)))
        scope = {"coefficient": _kernel.coefficient, "H": njit(h), "HX": njit(hx)}
        exec(_GENERAL_TEMPLATE.format(extra=extra), scope)
        hterm._compiled[key] = njit(scope["rhs"])
    return hterm._compiled[key]


@dataclass(frozen=True)
class System:
    rhs: object
    arrays: tuple
    hmax: float

    def args(self, family: Family):
        return self.arrays + (float(family.lam), float(family.mu), bool(family.linear_test_mode))


def system(family: Family, driver: bf.Driver, quad=None) -> System:
    """Packed kernel inputs for a family on a driver (cached on the driver)."""
    if driver.is_symbolic:
        raise SymbolicDriver("symbolic drivers have no trajectories")
    form = family.form
    key = ("system", form, id(quad), quad is None)
    hit = driver._cache.get(key)
    if hit is not None and hit[0] is quad:
        return hit[1]
    fns = [coef_fn(driver, form.a3), coef_fn(driver, form.a2), coef_fn(driver, form.a1),
           bf.Constant(0.0) if quad is None else coef_fn(driver, quad)]
    fn = _kernel.cubic_rhs
    if isinstance(form, GeneralH):
        fns += [driver.coefficient(c) for c in form.h.coefficient_ids]
        fn = _general_rhs(form.h)
    arrays = _pack(driver, fns)
    out = System(fn, arrays, _max_step(driver, arrays[5]))
    driver._cache[key] = (quad, out)
    return out


# ---------------------------------------------------------------------------
# integration


def trajectory(family: Family, driver: bf.Driver, t0: float, x0: float, t_out, tol: float,
               mode: int = 0, guard: float | None = None, raise_on_fail: bool = True):
    """Integrate through the sorted times ``t_out``.

    Steps are controlled to ``STEP_TOL_FACTOR * tol`` so values are accurate
    to about ``tol`` rather than only locally. Returns ``(xs, ys, status,
    t_stop)``; ``ys`` holds the accumulated integral of ``f_x`` when
    ``mode == 1``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t_out = np.ascontiguousarray(np.atleast_1d(np.asarray(t_out, dtype=float)))
    if guard is None:
        guard = default_guard(family, driver)
    sys_ = system(family, driver)
    if x0 == 0.0 and mode == 0:
        return np.zeros_like(t_out), np.zeros_like(t_out), _kernel.OK, float(t_out[-1])
    xs, ys, status, t_stop, _ = _kernel.dopri(sys_.rhs, sys_.args(family), mode, float(t0), float(x0),
                                              t_out, STEP_TOL_FACTOR * float(tol), float(guard), sys_.hmax,
                                              MAX_STEPS)
    if raise_on_fail and status != _kernel.OK:
        _raise_status(status, t_stop)
    return xs, ys, status, t_stop


def _raise_status(status: int, t_stop: float):
    if status == _kernel.BLOWUP:
        raise BlowUp(t_stop)
    if status == _kernel.UNDERFLOW:
        raise StepUnderflow(t_stop)
    raise StepUnderflow(t_stop)


def flow_map(family: Family, driver: bf.Driver, t0: float, x0: float, t1: float, tol: float,
             guard: float | None = None) -> float:
    """Solution value at ``t1`` of the solution through ``(t0, x0)``.

    ``t1 < t0`` integrates backward in time.

    Raises
    ------
    BlowUp
        When ``|x|`` exceeds the guard radius (default ``1e3`` times the
        dissipativity radius).
    StepUnderflow
        When the step falls below ``1e-14 |t1 - t0|``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if t1 == t0 or x0 == 0.0:
        return 0.0 if x0 == 0.0 else float(x0)
    xs, _, _, _ = trajectory(family, driver, t0, x0, [t1], tol, guard=guard)
    return float(xs[0])


def quadrature(driver: bf.Driver, coeff, t0: float, times, tol: float) -> np.ndarray:
    """Cumulative integrals of a coefficient from ``t0`` to each of ``times``."""
    fam = Family(Cubic(0.0, 0.0, 0.0))
    sys_ = system(fam, driver, quad=coeff)
    times = np.ascontiguousarray(np.asarray(times, dtype=float))
    _, ys, status, t_stop, _ = _kernel.dopri(sys_.rhs, sys_.args(fam), 2, float(t0), 0.0, times,
                                             float(tol), math.inf, sys_.hmax, MAX_STEPS)
    if status != _kernel.OK:
        _raise_status(status, t_stop)
    return ys


# ---------------------------------------------------------------------------
# absorbing interval


def _sample_times(driver: bf.Driver, n: int = 512) -> np.ndarray:
    omega = driver.frequencies
    if not np.any(omega):
        return np.zeros(1)
    if driver.period is not None:
        return np.linspace(0.0, driver.period, n, endpoint=False)
    rng = np.random.default_rng(12345)
    span = 200.0 * 2.0 * math.pi / float(np.min(np.abs(omega[omega != 0])))
    return np.sort(rng.uniform(0.0, span, n))


def dissipativity_radius(family: Family, driver: bf.Driver, lam: float | None = None,
                         mu: float | None = None, max_doublings: int = 30) -> float:
    """Radius ``rho`` with ``rhs(t, rho) < 0 < rhs(t, -rho)`` on sampled times.

    Raises
    ------
    NotCoercive
        When the leading coefficient is not positive or validation keeps failing.
    """
    fam = family.with_params(lam, mu)
    if fam.linear_test_mode:
        raise NotCoercive("linear test mode has no absorbing interval")
    key = ("radius", fam)
    if key in driver._cache:
        return driver._cache[key]
    form = fam.form
    r1, _ = bf.bounds(driver, coef_fn(driver, form.a3))
    a2lo, a2hi = bf.bounds(driver, coef_fn(driver, form.a2))
    _, k2 = bf.bounds(driver, coef_fn(driver, form.a1))
    if isinstance(form, GeneralH):
        if form.h.certified is None:
            raise NotCoercive("general form needs a certified bound triple for h")
        r1 = r1 - form.h.certified[1]
    if not r1 > 0:
        raise NotCoercive("leading coefficient must be bounded below by a positive constant")
    big_a2 = max(abs(a2lo + fam.mu), abs(a2hi + fam.mu))
    c = max(k2 + fam.lam, 0.0)
    root = (big_a2 + math.sqrt(big_a2 * big_a2 + 4.0 * r1 * c)) / (2.0 * r1)
    rho = max(1.1 * root, 1.0)
    times = _sample_times(driver)
    for _ in range(max_doublings):
        up = rhs(fam, driver, times, rho)
        down = rhs(fam, driver, times, -rho)
        if np.all(np.asarray(up) < 0) and np.all(np.asarray(down) > 0):
            driver._cache[key] = rho
            return rho
        rho *= 2.0
    raise NotCoercive("absorbing interval validation failed past the doubling cap")


def default_guard(family: Family, driver: bf.Driver) -> float:
    if family.linear_test_mode:
        return 1e300
    return GUARD_FACTOR * dissipativity_radius(family, driver)


# ---------------------------------------------------------------------------
# JSON descriptors


def family_from_json(obj, path: str = "family") -> Family:
    if not isinstance(obj, dict):
        raise ConfigInvalid(path, "family must be an object")
    form_name = obj.get("form", "cubic")
    refs = {}
    for name in ("a3", "a2", "a1"):
        v = obj.get(name, name)
        if not isinstance(v, (str, int, float)) or isinstance(v, bool):
            raise ConfigInvalid(f"{path}.{name}", "must be a coefficient id or a number")
        refs[name] = v if isinstance(v, str) else float(v)
    if form_name == "cubic":
        form = Cubic(**refs)
    elif form_name == "general":
        h = obj.get("h")
        if not isinstance(h, dict) or "expression" not in h:
            raise ConfigInvalid(f"{path}.h.expression", "missing field")
        cert = h.get("certified")
        if cert is not None:
            try:
                cert = (float(cert["rho0"]), float(cert["eps0"]), float(cert.get("m", 0.0)))
            except (KeyError, TypeError) as exc:
                raise ConfigInvalid(f"{path}.h.certified", f"malformed: {exc}") from None
        try:
            form = GeneralH(h=HTerm(str(h["expression"]), cert), **refs)
        except (ValueError, sympy.SympifyError) as exc:
            raise ConfigInvalid(f"{path}.h.expression", str(exc)) from None
    else:
        raise ConfigInvalid(f"{path}.form", f"unknown form {form_name!r}")
    try:
        return Family(form, float(obj.get("lambda", 0.0)), float(obj.get("mu", 0.0)),
                      bool(obj.get("linear_test_mode", False)))
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(path, str(exc)) from None


def family_to_json(family: Family) -> dict:
    form = family.form
    out = {"form": "cubic" if isinstance(form, Cubic) else "general",
           "a3": form.a3, "a2": form.a2, "a1": form.a1,
           "lambda": family.lam, "mu": family.mu}
    if family.linear_test_mode:
        out["linear_test_mode"] = True
    if isinstance(form, GeneralH):
        h = {"expression": form.h.expression}
        if form.h.certified is not None:
            h["certified"] = dict(zip(("rho0", "eps0", "m"), form.h.certified))
        out["h"] = h
    return out
