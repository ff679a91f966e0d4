"""Lyapunov exponents of copies of the base and Sacker-Sell spectrum estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import base_flow as bf
from . import dynamics as dy
from .attractor import EquilibriumSamples
from .errors import NoConvergence, OrderingViolated, SymbolicDriver

TOL_HYP = 1e-3
QP_CYCLES = 400


@dataclass(frozen=True, slots=True)
class SpectrumInterval:
    lo: float
    hi: float
    exactness: str = "exact"

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("spectrum endpoints out of order")
        if self.exactness not in ("exact", "estimated"):
            raise ValueError("exactness must be 'exact' or 'estimated'")

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def shifted(self, c: float) -> "SpectrumInterval":
        return SpectrumInterval(self.lo + c, self.hi + c, self.exactness)

    def as_lambda_bounds(self) -> tuple[float, float]:
        """``(lambda_minus, lambda_plus)`` with ``sp = [-lambda_plus, -lambda_minus]``."""
        return -self.hi, -self.lo


@dataclass(frozen=True, slots=True)
class ExponentReport:
    value: float
    classification: str

    @classmethod
    def of(cls, value: float, tol_hyp: float = TOL_HYP) -> "ExponentReport":
        if value < -tol_hyp:
            kind = "attractive"
        elif value > tol_hyp:
            kind = "repulsive"
        else:
            kind = "nonhyperbolic"
        return cls(float(value), kind)


def _default_horizon(driver: bf.Driver) -> float:
    if driver.period is not None:
        return driver.period
    omega = np.abs(driver.frequencies)
    if not np.any(omega):
        return 10.0
    return QP_CYCLES * 2.0 * math.pi / float(np.min(omega[omega > 0]))


def _round_horizon(driver: bf.Driver, horizon: float) -> float:
    if driver.period is not None:
        return driver.period * max(1, round(horizon / driver.period))
    return horizon


def _orbit_average(family, driver, s0, x0, horizon, tol, backward):
    t1 = s0 - horizon if backward else s0 + horizon
    _, ys, _, _ = dy.trajectory(family, driver, s0, x0, [t1], tol, mode=1)
    return float(ys[0]) / (t1 - s0)


def lyapunov_on_equilibrium(family: dy.Family, driver: bf.Driver, eq: EquilibriumSamples | str | None,
                            horizon: float | None = None, tol: float = 1e-9,
                            tol_hyp: float = TOL_HYP, backward: bool | None = None,
                            max_doublings: int = 6) -> ExponentReport:
    """Time average of ``f_x`` along the orbit of an equilibrium.

    ``eq`` is ``"zero"`` (or None) for the zero solution, otherwise fiber
    samples of a copy; the orbit is regenerated from the first sample, forward
    for attractive copies and backward for the middle (``kappa``) copy unless
    ``backward`` says otherwise.

    Raises
    ------
    NoConvergence
        When the average keeps moving by more than ``tol_hyp / 4`` as the
        horizon doubles.
    """
    if driver.is_symbolic:
        raise SymbolicDriver("exponents along orbits need a trajectory driver")
    h0 = _round_horizon(driver, horizon or _default_horizon(driver))
    if eq is None or (isinstance(eq, str) and eq == "zero"):
        a1 = dy.coef_fn(driver, family.form.a1)
        if isinstance(a1, bf.Constant):
            return ExponentReport.of(a1.value + family.lam, tol_hyp)
        return ExponentReport.of(sacker_sell_mean(driver, a1, h0) + family.lam, tol_hyp)
    s0 = float(eq.offsets[0])
    x0 = float(eq.values[0])
    if backward is None:
        backward = eq.name == "kappa"
    if x0 == 0.0:
        return lyapunov_on_equilibrium(family, driver, "zero", horizon, tol, tol_hyp)
    prev = _orbit_average(family, driver, s0, x0, h0, tol, backward)
    if not np.any(driver.frequencies) or driver.period is not None:
        return ExponentReport.of(prev, tol_hyp)
    h = h0
    for _ in range(max_doublings):
        h *= 2.0
        cur = _orbit_average(family, driver, s0, x0, h, tol, backward)
        if abs(cur - prev) <= tol_hyp / 4:
            return ExponentReport.of(cur, tol_hyp)
        prev = cur
    raise NoConvergence("exponent average did not settle", horizon_cap=h)


def sacker_sell_mean(driver: bf.Driver, coeff, horizon: float | None = None) -> float:
    """One-period mean for periodic drivers, long-run mean otherwise."""
    h = horizon or _default_horizon(driver)
    if driver.period is not None:
        h = driver.period
    return bf.birkhoff(driver, coeff, h, h)[0]


def sacker_sell(driver: bf.Driver, coeff, horizon: float | None = None,
                window: float | None = None) -> SpectrumInterval:
    """Sacker-Sell spectrum of a coefficient.

    Exact for constant coefficients, autonomous and periodic drivers (a single
    point) and symbolic drivers (the range of the stored integrals). For
    quasi-periodic drivers the extrema of sliding-window averages give an
    estimate only; such drivers are uniquely ergodic so the true spectrum is
    a point.
    """
    fn = driver.coefficient(coeff) if isinstance(coeff, str) else coeff
    if isinstance(fn, bf.Constant):
        return SpectrumInterval(fn.value, fn.value)
    if isinstance(fn, bf.TableEntry):
        return SpectrumInterval(min(fn.integrals), max(fn.integrals))
    if driver.is_symbolic:
        raise SymbolicDriver("symbolic drivers only carry table entries")
    if not np.any(driver.frequencies):
        v = bf.eval(driver, fn, 0.0)
        return SpectrumInterval(v, v)
    if driver.period is not None:
        m = sacker_sell_mean(driver, fn)
        return SpectrumInterval(m, m)
    h = horizon or _default_horizon(driver)
    w = window or h / 20.0
    _, lo, hi = bf.birkhoff(driver, fn, h, w)
    return SpectrumInterval(lo, hi, "estimated")


def check_exponent_sum(family: dy.Family, driver: bf.Driver, mu: float, nu: float, lambda0: float,
                       eq1: EquilibriumSamples, eq2: EquilibriumSamples,
                       horizon: float | None = None, tol: float = 1e-9) -> dict:
    """Sign test for the sum of the exponent integrals along two copies.

    ``eq1`` is a copy of ``x' = f + mu x^2`` and ``eq2`` a copy of
    ``x' = f - lambda0 x + nu x^2``; the left-hand side is the sum of the
    time averages of the respective ``f_x`` terms, and ``holds`` is
    ``lhs < 0``.

    Raises
    ------
    OrderingViolated
        Unless ``0 < eq2 < eq1`` with ``nu < mu`` (or the mirrored negative
        ordering) and ``lambda0 > 0``.
    """
    v1 = np.asarray(eq1.values)
    v2 = np.asarray(eq2.values)
    positive = bool(np.all(v2 > 0) and np.all(v2 < v1) and nu < mu)
    negative = bool(np.all(v2 < 0) and np.all(v2 > v1) and nu > mu)
    if not (positive or negative):
        raise OrderingViolated("need 0 < kappa2 < kappa1 with nu < mu, or the mirrored ordering")
    if not lambda0 > 0:
        raise OrderingViolated("lambda0 must be positive")
    fam1 = family.with_params(mu=mu)
    fam2 = family.with_params(lam=family.lam - lambda0, mu=nu)
    e1 = lyapunov_on_equilibrium(fam1, driver, eq1, horizon, tol, backward=False).value
    e2 = lyapunov_on_equilibrium(fam2, driver, eq2, horizon, tol, backward=False).value
    lhs = e1 + e2
    return {"holds": bool(lhs < 0), "lhs": float(lhs), "terms": (float(e1), float(e2))}
