"""Closed-form sufficient criteria deciding which lambda-diagram a cubic family has.

Every inequality is evaluated with a slack ``DELTA``: a strict inequality
``x > y`` counts as satisfied only when ``x - y > DELTA``, and values within
the slack of equality never produce a verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import base_flow as bf
from . import spectrum as sp
from .errors import (EstimatedSpectrumOnly, HypothesisHFails, InconsistentBounds, NotCPDriver,
                     PreconditionFailed, RouteInequalityFails)

DELTA = 1e-12
ZERO_SPECTRUM_TOL = 1e-10

SNT = "SaddleNodeTranscritical"
CP = "ClassicalPitchfork"
GP = "GeneralizedPitchfork"
PATTERNS = (SNT, CP, GP)


@dataclass(frozen=True)
class Bounds:
    """``k1 <= a1 <= k2`` and ``r1 <= a3 <= r2``."""

    k1: float
    k2: float
    r1: float
    r2: float

    def __post_init__(self):
        if not self.k1 <= self.k2:
            raise InconsistentBounds("need k1 <= k2")
        if not 0 < self.r1 <= self.r2:
            raise InconsistentBounds("need 0 < r1 <= r2")


@dataclass(frozen=True)
class HParams:
    """Smallness of the perturbation ``h``: ``|h| <= eps0`` while ``|x| <= rho0``."""

    rho0: float
    eps0: float
    r1: float
    r2: float

    @property
    def s1(self) -> float:
        return self.r1 - self.eps0

    @property
    def s2(self) -> float:
        return self.r2 + self.eps0


@dataclass
class CriteriaVerdict:
    ensured: str | None
    precluded: frozenset
    side: str
    witnesses: dict = field(default_factory=dict)
    model: str = "cubic"

    def __post_init__(self):
        self.precluded = frozenset(self.precluded)
        if self.ensured is not None and self.ensured in self.precluded:
            raise ValueError("a pattern cannot be both ensured and precluded")

    @property
    def conclusive(self) -> bool:
        return self.ensured is not None

    def to_dict(self) -> dict:
        return {"ensured": self.ensured, "precluded": sorted(self.precluded), "side": self.side,
                "model": self.model, "witnesses": {k: self.witnesses[k] for k in sorted(self.witnesses)}}


def _gt(x: float, y: float, delta: float = DELTA) -> bool:
    return x - y > delta


def _ensure(pattern: str, side: str, witnesses: dict, model: str) -> CriteriaVerdict:
    return CriteriaVerdict(pattern, frozenset(p for p in PATTERNS if p != pattern), side, witnesses, model)


# ---------------------------------------------------------------------------
# coefficients with a bounded primitive


def classify_cp_case(driver: bf.Driver, b: str, a2: str, a1: str | None = "a1",
                     weighted: str | None = None) -> CriteriaVerdict:
    """Diagram of a cubic whose linear coefficient is the derivative of ``b``.

    The sign of the spectrum of ``exp(b) * a2`` decides: positive gives the
    saddle-node/transcritical pair with the lower delimiter colliding,
    negative the same with the upper one, and a spectrum containing zero the
    classical pitchfork.

    On a symbolic driver no primitive can be differentiated; ``weighted``
    names the table entry holding ``exp(b) * a2`` and the ``a1`` entry must
    integrate to zero against every measure.

    Raises
    ------
    NotCPDriver
        When ``a1`` is not the derivative of ``b``.
    """
    if driver.is_symbolic:
        if weighted is None:
            raise NotCPDriver("symbolic drivers need a table entry for exp(b) * a2")
        if a1 is not None:
            ent = driver.coefficient(a1)
            ints = ent.integrals if isinstance(ent, bf.TableEntry) else (ent.value,)
            if any(abs(v) > DELTA for v in ints):
                raise NotCPDriver("a1 has nonzero integrals, so it has no bounded primitive")
        spec = sp.sacker_sell(driver, weighted)
    else:
        if a1 is not None:
            deriv = bf.canonical(driver, bf.LogComposite(b, derivative=True))
            lin = bf.canonical(driver, a1)
            if not _series_close(deriv, lin):
                raise NotCPDriver(f"{a1} is not the derivative of {b}")
        spec = sp.sacker_sell(driver, bf.LogComposite(b, factor=a2, power=1.0))
    w = {"sp_lo": spec.lo, "sp_hi": spec.hi, "exactness": spec.exactness}
    # membership of 0 is an equality, so it is decided at quadrature accuracy
    if spec.lo > ZERO_SPECTRUM_TOL:
        return _ensure(SNT, "lower_collides", w, "cubic")
    if spec.hi < -ZERO_SPECTRUM_TOL:
        return _ensure(SNT, "upper_collides", w, "cubic")
    return _ensure(CP, "both", w, "cubic")


def _series_close(a, b, tol: float = 1e-12) -> bool:
    for sa, sb in zip(a, b):
        n = max(sa.n, sb.n)
        pa, pb = sa.padded(n), sb.padded(n)
        if abs(pa.mean - pb.mean) > tol:
            return False
        if pa.c.size and (np.max(np.abs(pa.c - pb.c)) > tol or np.max(np.abs(pa.s - pb.s)) > tol):
            return False
    return True


def strict_spectrum_bounds(driver: bf.Driver, coeff) -> dict:
    """Compare the extrema of a coefficient with its spectrum.

    A coefficient is nonconstant exactly when its minimum lies below the
    spectrum and its maximum above it; the three flags are reported
    separately so the equivalence can be checked.

    Raises
    ------
    EstimatedSpectrumOnly
        For quasi-periodic drivers, whose spectrum is only estimated.
    """
    fn = driver.coefficient(coeff) if isinstance(coeff, str) else coeff
    if isinstance(fn, bf.Constant):
        return {"is_constant": True, "min_lt_inf": False, "max_gt_sup": False}
    if isinstance(fn, bf.TableEntry):
        lo, hi = min(fn.integrals), max(fn.integrals)
        return {"is_constant": fn.min == fn.max, "min_lt_inf": fn.min < lo, "max_gt_sup": fn.max > hi}
    spec = sp.sacker_sell(driver, fn)
    if spec.exactness != "exact":
        raise EstimatedSpectrumOnly("strict comparison needs an exact spectrum")
    g, e = bf.canonical(driver, fn)
    constant = (g.is_constant() and e.is_constant()) or not np.any(driver.frequencies)
    if constant:
        return {"is_constant": True, "min_lt_inf": False, "max_gt_sup": False}
    vmin, vmax = bf.bounds(driver, fn)
    scale = max(1.0, abs(vmin), abs(vmax))
    tol = 1e-9 * scale
    return {"is_constant": False, "min_lt_inf": vmin < spec.lo - tol, "max_gt_sup": vmax > spec.hi + tol}


# ---------------------------------------------------------------------------
# sign-preserving a2


def lower_upper_solution_radius(bounds: Bounds, lam: float) -> float:
    """Radius ``sqrt((-lam - k1) / r2)`` of the constant strict lower (upper) solution.

    Raises
    ------
    PreconditionFailed
        Unless ``lam + k1 < 0``.
    """
    if not lam + bounds.k1 < 0:
        raise PreconditionFailed("need lambda + k1 < 0")
    return math.sqrt((-lam - bounds.k1) / bounds.r2)


def solution_radius_applies(bounds: Bounds, lam: float, a2_range) -> str | None:
    """``'upper'`` when the constant radius is a strict lower solution, ``'lower'``
    when its negative is a strict upper solution, else None."""
    rho1 = lower_upper_solution_radius(bounds, lam)
    thresh = 2.0 * bounds.r2 * rho1
    lo, hi = float(a2_range[0]), float(a2_range[1])
    if _gt(lo, thresh):
        return "upper"
    if _gt(-thresh, hi):
        return "lower"
    return None


def _check_consistent(bounds: Bounds, spec: sp.SpectrumInterval):
    lam_minus, lam_plus = spec.as_lambda_bounds()
    eps = 1e-12 * max(1.0, abs(bounds.k1), abs(bounds.k2))
    if not (bounds.k1 <= -lam_plus + eps and -lam_minus <= bounds.k2 + eps):
        raise InconsistentBounds("spectrum of a1 must lie inside [k1, k2]")
    return lam_minus, lam_plus


def window(bounds: Bounds, spec: sp.SpectrumInterval) -> tuple[float, float]:
    """Open interval of a2 values (positive orientation) ensuring the generalized pitchfork."""
    lam_minus, lam_plus = _check_consistent(bounds, spec)
    return _window(bounds.r1, bounds.r2, bounds.k1, bounds.k2, lam_minus, lam_plus)


def _window(s1, s2, k1, k2, lam_minus, lam_plus):
    left = 2.0 * math.sqrt(s2 * max(0.0, -lam_plus - k1))
    denom = lam_plus + k2
    if lam_plus == lam_minus:
        right = 0.0
    elif denom <= 0:
        right = math.inf
    else:
        right = math.sqrt(s1) * (lam_plus - lam_minus) / math.sqrt(denom)
    return left, right


def _verdict(s1, s2, bounds: Bounds, spec: sp.SpectrumInterval, a2_range, model: str) -> CriteriaVerdict:
    lam_minus, lam_plus = _check_consistent(bounds, spec)
    k1, k2 = bounds.k1, bounds.k2
    lo, hi = float(a2_range[0]), float(a2_range[1])
    if lo > hi:
        raise InconsistentBounds("a2 range out of order")
    left_minus = 2.0 * math.sqrt(s2 * max(0.0, -lam_minus - k1))
    left_plus, right = _window(s1, s2, k1, k2, lam_minus, lam_plus)
    condition = s1 * (lam_plus - lam_minus) ** 2 + 4.0 * s2 * (lam_plus + k1) * (lam_plus + k2)
    w = {"lambda_minus": lam_minus, "lambda_plus": lam_plus, "a2_min": lo, "a2_max": hi,
         "saddle_node_threshold": left_minus, "window_lo": left_plus, "window_hi": right,
         "band_condition": condition}

    if lo == 0.0 and hi == 0.0:
        w["slack_zero"] = 0.0
        return _ensure(CP, "both", w, model)
    if lo >= 0.0:
        sign, p, q, side = 1.0, lo, hi, "lower_collides"
    elif hi <= 0.0:
        sign, p, q, side = -1.0, -hi, -lo, "upper_collides"
    else:
        return CriteriaVerdict(None, frozenset(), "unknown", w, model)
    w["orientation"] = sign

    k1_below = _gt(-lam_plus, k1)
    w["slack_saddle_node"] = p - left_minus
    if k1_below and _gt(p, left_minus):
        return _ensure(SNT, side, w, model)
    precluded = set()
    w["slack_window_lo"] = p - left_plus
    w["slack_window_hi"] = right - q
    if k1_below and _gt(p, left_plus):
        precluded.add(CP)
    band = _gt(lam_plus, lam_minus)
    if band and _gt(right, q):
        precluded.add(SNT)
    if _gt(condition, 0.0) and CP in precluded and SNT in precluded:
        return _ensure(GP, side, w, model)
    return CriteriaVerdict(None, frozenset(precluded), side, w, model)


def cubic_verdict(bounds: Bounds, sp_a1: sp.SpectrumInterval, a2_range) -> CriteriaVerdict:
    """Apply the sufficient criteria for a cubic with sign-preserving ``a2``.

    In order: ``a2 == 0`` ensures the classical pitchfork; ``a2`` uniformly
    above ``2 sqrt(r2 (-lambda_minus - k1))`` ensures the saddle-node and
    transcritical pair; above ``2 sqrt(r2 (-lambda_plus - k1))`` precludes the
    classical pitchfork; below ``sqrt(r1) (lambda_plus - lambda_minus) /
    sqrt(lambda_plus + k2)`` precludes the saddle-node pair; both together
    (with the band condition) ensure the generalized pitchfork. Negative
    ``a2`` ranges are handled by mirroring, which swaps the colliding side.

    Raises
    ------
    InconsistentBounds
        When the spectrum does not fit inside ``[k1, k2]``.
    """
    return _verdict(bounds.r1, bounds.r2, bounds, sp_a1, a2_range, "cubic")


def general_h_verdict(bounds: Bounds, sp_a1: sp.SpectrumInterval, a2_range, hp: HParams) -> CriteriaVerdict:
    """The cubic criteria for ``(-a3 + h) x^3 + ...`` with ``r1 -> s1`` and ``r2 -> s2``.

    Raises
    ------
    HypothesisHFails
        When ``eps0`` or ``rho0`` fail the smallness hypothesis on ``h``.
    """
    lam_minus, lam_plus = _check_consistent(bounds, sp_a1)
    if not 0 <= hp.eps0 < bounds.r1:
        raise HypothesisHFails("eps0", hp.eps0, bounds.r1)
    s1, s2 = bounds.r1 - hp.eps0, bounds.r2 + hp.eps0
    upper = math.sqrt(max(0.0, lam_plus + bounds.k2) / s1)
    if not upper < hp.rho0:
        raise HypothesisHFails("upper_radius", upper, hp.rho0)
    lower = math.sqrt(max(0.0, -lam_minus - bounds.k1) / s2)
    if not lower < hp.rho0:
        raise HypothesisHFails("lower_radius", lower, hp.rho0)
    v = _verdict(s1, s2, bounds, sp_a1, a2_range, "general-h")
    v.witnesses.update(s1=s1, s2=s2, rho0=hp.rho0, eps0=hp.eps0)
    return v


def check_h_composition(hints: dict, raise_on_fail: bool = False) -> bool:
    """Check a route to coercivity, concavity and the smallness hypothesis on ``h``.

    ``hints`` may contain:

    * ``cubic_tail_coercive_dc`` with ``r``, ``r1`` and ``a3_nonconstant``:
      the tail ``(-r + h) x^3`` is coercive and d-concave with ``r < r1``
      (``r <= r1`` when ``a3`` is not constant);
    * ``route``: ``"i"`` (needs ``eps0, rho0, r1, r2, k1, k2``), ``"ii"``
      (``eps0, rho0, r1, lambda_plus, k2``) or ``"iii"`` (``m, rho0, r1,
      lambda_plus, k2``).

    Returns whether every supplied condition holds.

    Raises
    ------
    RouteInequalityFails
        With ``raise_on_fail``, naming the failed inequality.
    """
    def fail(msg):
        if raise_on_fail:
            raise RouteInequalityFails(msg)
        return False

    if "cubic_tail_coercive_dc" in hints:
        if not hints["cubic_tail_coercive_dc"]:
            return fail("tail is not coercive and d-concave")
        r, r1 = float(hints["r"]), float(hints["r1"])
        ok = r <= r1 if hints.get("a3_nonconstant", False) else r < r1
        if not ok:
            return fail("tail constant r too large")
    route = hints.get("route")
    if route is None:
        return True
    g = {k: float(v) for k, v in hints.items() if isinstance(v, (int, float)) and not isinstance(v, bool)}
    if route == "i":
        eps0, rho0, r1, r2, k1, k2 = (g[k] for k in ("eps0", "rho0", "r1", "r2", "k1", "k2"))
        if not 0 < eps0 < r1:
            return fail("need 0 < eps0 < r1")
        if not k1 < 0 < k2:
            return fail("need k1 < 0 < k2")
        if not k2 - k1 < rho0**2 * (r1 - eps0):
            return fail("need k2 - k1 < rho0^2 s1")
        if not math.sqrt((k2 - k1) / (r2 + eps0)) < rho0:
            return fail("r2 too small")
        return True
    if route == "ii":
        eps0, rho0, r1, lam_plus, k2 = (g[k] for k in ("eps0", "rho0", "r1", "lambda_plus", "k2"))
        if not (eps0 > 0 and rho0 > 0):
            return fail("need positive eps0 and rho0")
        if not r1 > (lam_plus + k2) / rho0**2 + eps0:
            return fail("need r1 > (lambda_plus + k2)/rho0^2 + eps0")
        return True
    if route == "iii":
        m, rho0, r1, lam_plus, k2 = (g[k] for k in ("m", "rho0", "r1", "lambda_plus", "k2"))
        if not rho0 > math.sqrt(max(0.0, lam_plus + k2) / r1):
            return fail("need rho0 > sqrt((lambda_plus + k2)/r1)")
        bound = r1 / rho0 - (lam_plus + k2) / rho0**3
        if not 0 < m < bound:
            return fail(f"need 0 < m < {bound:.6g}")
        return True
    raise ValueError(f"unknown route {route!r}")


def h_route_iii_bound(r1: float, lam_plus_k2: float, rho0: float) -> float:
    """Largest admissible Lipschitz constant of ``h`` near 0 in the third route."""
    return r1 / rho0 - lam_plus_k2 / rho0**3


def bounds_from_json(obj) -> Bounds:
    return Bounds(float(obj["k1"]), float(obj["k2"]), float(obj["r1"]), float(obj["r2"]))
