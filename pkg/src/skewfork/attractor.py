"""Pullback delimiters of the global attractor, basin boundaries and middle copies.

Fibers are time offsets ``s_j`` along the generating orbit. The upper
delimiter at ``s_j`` is the limit of the solution started at ``s_j - T``
from the top of the absorbing interval, as ``T`` doubles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from . import base_flow as bf
from . import dynamics as dy
from .errors import AmbiguousBasin, BlowUp, NoConvergence

T0 = 8.0
DOUBLINGS = 14
PINCH_FACTOR = 10.0
SEP_FACTOR = 1e3


@dataclass(frozen=True)
class FiberGrid:
    offsets: tuple

    def __post_init__(self):
        offs = tuple(float(s) for s in self.offsets)
        if len(offs) < 8:
            raise ValueError("a fiber grid needs at least 8 offsets")
        if any(b <= a for a, b in zip(offs, offs[1:])):
            raise ValueError("fiber offsets must be strictly increasing")
        if offs[0] < 0:
            raise ValueError("fiber offsets must be nonnegative")
        object.__setattr__(self, "offsets", offs)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.offsets)

    @classmethod
    def uniform(cls, driver: bf.Driver, m: int = 8) -> "FiberGrid":
        """``m`` offsets spread over one period (or one slowest cycle)."""
        omega = np.abs(driver.frequencies)
        if driver.is_symbolic or not np.any(omega):
            return cls(tuple(float(i) for i in range(m)))
        span = 2.0 * math.pi / float(np.min(omega[omega > 0]))
        return cls(tuple(span * i / m for i in range(m)))


@dataclass(frozen=True)
class AttractorSlice:
    """Sampled delimiters; ``alpha <= 0 <= beta`` at every fiber."""

    offsets: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    horizon_used: float
    residual: float
    converged_lower: bool = True
    converged_upper: bool = True
    residual_lower: float = 0.0
    residual_upper: float = 0.0

    @property
    def converged(self) -> bool:
        return self.converged_lower and self.converged_upper

    @property
    def records(self) -> list[dict]:
        return [{"s": float(s), "alpha": float(a), "beta": float(b)}
                for s, a, b in zip(self.offsets, self.alpha, self.beta)]


@dataclass(frozen=True)
class EquilibriumSamples:
    name: str
    offsets: np.ndarray
    values: np.ndarray
    converged: np.ndarray
    horizon_used: float = 0.0
    residual: float = 0.0
    strictly_inside: np.ndarray | None = field(default=None)

    @classmethod
    def zero(cls, offsets) -> "EquilibriumSamples":
        offsets = np.asarray(offsets, dtype=float)
        return cls("zero", offsets, np.zeros_like(offsets), np.ones(offsets.shape, bool))

    @classmethod
    def constant(cls, name: str, offsets, value: float) -> "EquilibriumSamples":
        offsets = np.asarray(offsets, dtype=float)
        return cls(name, offsets, np.full(offsets.shape, float(value)), np.ones(offsets.shape, bool))

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def _pullback_side(family, driver, offsets, sign, rho, tol, t0, doublings):
    prev = None
    residual = math.inf
    horizon = t0
    for k in range(doublings + 1):
        horizon = t0 * 2.0**k
        xs, _, _, _ = dy.trajectory(family, driver, offsets[0] - horizon, sign * rho, offsets, tol)
        if prev is not None:
            residual = float(np.max(np.abs(xs - prev)))
            if residual < tol:
                return xs, horizon, residual, True
        prev = xs
    return prev, horizon, residual, False


def pullback_slice(family: dy.Family, driver: bf.Driver, grid: FiberGrid, tol: float,
                   t0: float = T0, doublings: int = DOUBLINGS) -> AttractorSlice:
    """Delimiters with per-side convergence flags; never raises on slow convergence.

    When a side has not converged its values are still one-sided bounds:
    pullback from the top decreases towards ``beta`` and from the bottom
    increases towards ``alpha``.
    """
    rho = dy.dissipativity_radius(family, driver)
    offsets = grid.array
    beta, hb, rb, cb = _pullback_side(family, driver, offsets, 1.0, rho, tol, t0, doublings)
    alpha, ha, ra, ca = _pullback_side(family, driver, offsets, -1.0, rho, tol, t0, doublings)
    return AttractorSlice(offsets, np.minimum(alpha, 0.0), np.maximum(beta, 0.0), max(ha, hb),
                          max(ra, rb), ca, cb, ra, rb)


def pullback_delimiters(family: dy.Family, driver: bf.Driver, grid: FiberGrid, tol: float,
                        t0: float = T0, doublings: int = DOUBLINGS) -> AttractorSlice:
    """Lower and upper delimiters of the pullback attractor on each fiber.

    Raises
    ------
    NoConvergence
        When the horizon cap ``t0 * 2**doublings`` is reached; the partial
        slice is attached as ``partial``.
    NotCoercive
        When no absorbing interval exists.
    """
    sl = pullback_slice(family, driver, grid, tol, t0, doublings)
    if not sl.converged:
        raise NoConvergence(f"pullback residual {sl.residual:.3g} above tol {tol:.3g}",
                            horizon_cap=t0 * 2.0**doublings, partial=sl)
    return sl


# ---------------------------------------------------------------------------
# collision metrics


def pinching_metrics(slice_: AttractorSlice) -> dict:
    upper = np.asarray(slice_.beta)
    lower = np.abs(np.asarray(slice_.alpha))
    return {"upper_min": float(upper.min()), "upper_max": float(upper.max()),
            "lower_min": float(lower.min()), "lower_max": float(lower.max())}


def side_signature(vmin: float, vmax: float, tol: float, tol_pinch: float | None = None,
                   tol_sep: float | None = None) -> str:
    """Classify one delimiter against the zero copy.

    ``zero``: coincides with 0; ``distinct``: bounded away from 0;
    ``pinched``: touches 0 on some fibers only; otherwise ``ambiguous``.
    The thresholds default to ``10 tol`` and ``1e3 tol``.
    """
    tol_pinch = PINCH_FACTOR * tol if tol_pinch is None else tol_pinch
    tol_sep = SEP_FACTOR * tol if tol_sep is None else tol_sep
    if vmax < tol_pinch:
        return "zero"
    if vmin > tol_sep:
        return "distinct"
    if vmin < tol_pinch and vmax > tol_sep:
        return "pinched"
    return "ambiguous"


# ---------------------------------------------------------------------------
# copies transported along fibers


def _transport(family, driver, offsets, values, t_end, tol):
    """Forward-flow each fiber value of an attractive copy to ``t_end``.

    Copies of autonomous drivers are constant and copies of periodic drivers
    repeat, so the flow is only needed over less than one period there.
    """
    if not np.any(driver.frequencies):
        return np.asarray(values, dtype=float).copy()
    out = np.empty(len(values))
    period = driver.period
    for j, (s, v) in enumerate(zip(offsets, values)):
        t1 = s + math.fmod(t_end - s, period) if period is not None else t_end
        out[j] = dy.flow_map(family, driver, s, v, t1, tol) if t1 != s else v
    return out


def _attractive_copies(sl: AttractorSlice, tol: float):
    """Lower and upper attractive copies; a delimiter equal to zero is replaced by 0."""
    lo_sig = side_signature(float(np.abs(sl.alpha).min()), float(np.abs(sl.alpha).max()), tol)
    up_sig = side_signature(float(sl.beta.min()), float(sl.beta.max()), tol)
    lower = sl.alpha if lo_sig == "distinct" else np.zeros_like(sl.alpha)
    upper = sl.beta if up_sig == "distinct" else np.zeros_like(sl.beta)
    return lower, upper, lo_sig, up_sig


def basin_boundary(family: dy.Family, driver: bf.Driver, grid: FiberGrid, target: str, tol: float,
                   slice_: AttractorSlice | None = None, t0: float = T0,
                   doublings: int = DOUBLINGS) -> EquilibriumSamples:
    """Boundary of the basin of the upper (``target='upper'``) or lower attractive copy.

    For ``upper`` this is the infimum of initial values whose forward orbit
    approaches the upper copy; for ``lower`` the supremum of those approaching
    the lower copy. Bisection is carried to width ``tol``.

    Raises
    ------
    AmbiguousBasin
        When the targeted copy is not distinct from the other one, or an orbit
        approaches neither copy before the horizon cap.
    """
    if target not in ("upper", "lower"):
        raise ValueError("target must be 'upper' or 'lower'")
    sl = slice_ or pullback_delimiters(family, driver, grid, tol, t0, doublings)
    lower, upper, lo_sig, up_sig = _attractive_copies(sl, tol)
    if (target == "upper" and up_sig != "distinct") or (target == "lower" and lo_sig != "distinct"):
        raise AmbiguousBasin(f"no {target} attractive copy distinct from the other one")
    if np.any(upper - lower <= SEP_FACTOR * tol):
        raise AmbiguousBasin("attractive copies are not separated")
    offsets = sl.offsets
    values = np.empty(len(offsets))
    approach = max(tol, 1e-3 * float(np.min(upper - lower)))
    split = 0.5 + 0.0137
    for j, s in enumerate(offsets):
        lo, hi = float(lower[j]), float(upper[j])
        cache: dict[float, tuple[float, float]] = {}

        def ends(horizon):
            if horizon not in cache:
                cache[horizon] = (dy.flow_map(family, driver, s, lo, s + horizon, tol),
                                  dy.flow_map(family, driver, s, hi, s + horizon, tol))
            return cache[horizon]

        def goes_up(x0):
            for k in range(doublings + 1):
                horizon = t0 * 2.0**k
                xl, xu = ends(horizon)
                x = dy.flow_map(family, driver, s, x0, s + horizon, tol)
                if abs(x - xu) < approach:
                    return True
                if abs(x - xl) < approach:
                    return False
            raise AmbiguousBasin(f"orbit from {x0:.6g} at fiber {s:.6g} approached neither copy")

        a, b = lo, hi
        while b - a > tol:
            m = a + split * (b - a)
            if goes_up(m):
                b = m
            else:
                a = m
        values[j] = 0.5 * (a + b)
    name = "kappa2" if target == "upper" else "kappa1"
    return EquilibriumSamples(name, offsets, values, np.ones(len(offsets), bool), sl.horizon_used, tol)


def repulsive_middle(family: dy.Family, driver: bf.Driver, grid: FiberGrid, tol: float,
                     slice_: AttractorSlice | None = None, t0: float = T0,
                     doublings: int = DOUBLINGS, strict: bool = True) -> EquilibriumSamples:
    """Repulsive copy between the attractive ones, by time-reversed pullback.

    Two backward orbits start in the future at the quarter points between the
    attractive copies (a delimiter equal to zero contributes the zero copy);
    the copy is reported once they agree to ``tol`` and the common value
    stops moving between successive horizons. With no distinct
    attractive copy the starts are at plus and minus half the absorbing radius.

    Raises
    ------
    BlowUp
        When the backward orbit escapes, i.e. there is no middle copy.
    NoConvergence
        When the backward limit does not settle (``strict`` only; otherwise
        unconverged fibers are flagged).
    """
    sl = slice_ if slice_ is not None else pullback_slice(family, driver, grid, tol, t0, doublings)
    lower, upper, lo_sig, up_sig = _attractive_copies(sl, tol)
    offsets = sl.offsets
    rho = dy.dissipativity_radius(family, driver)
    rev = offsets[::-1].copy()
    prev = None
    residual = math.inf
    horizon = t0
    last_err = None
    for k in range(doublings + 1):
        horizon = t0 * 2.0**k
        t_start = offsets[-1] + horizon
        if lo_sig != "distinct" and up_sig != "distinct":
            lo_end, up_end = -0.5 * rho, 0.5 * rho
        else:
            lo_end = 0.0 if lo_sig != "distinct" else _transport(family, driver, offsets[-1:],
                                                                 lower[-1:], t_start, tol)[0]
            up_end = 0.0 if up_sig != "distinct" else _transport(family, driver, offsets[-1:],
                                                                 upper[-1:], t_start, tol)[0]
        # two starts inside the gap; both backward orbits are drawn to the
        # repulsive copy, so their agreement certifies convergence even where
        # the motion is too slow for a horizon-to-horizon test
        ends = []
        failed = False
        for q in (0.25, 0.75):
            x_start = lo_end + q * (up_end - lo_end)
            xs, _, status, t_stop = dy.trajectory(family, driver, t_start, x_start, rev, tol,
                                                  raise_on_fail=False)
            if status == _kernel.BLOWUP:
                raise BlowUp(t_stop, "backward orbit escaped: no repulsive copy between the attractive ones")
            if status != _kernel.OK:
                last_err = t_stop
                failed = True
                break
            ends.append(xs[::-1])
        if failed:
            continue
        cur = 0.5 * (ends[0] + ends[1])
        residual = float(np.abs(ends[1] - ends[0]).max())
        if prev is not None:
            residual = max(residual, float(np.abs(cur - prev).max()))
        else:
            residual = max(residual, math.inf)
        prev = cur
        if residual < tol:
            break
    if prev is None:
        raise NoConvergence(f"backward integration failed near t={last_err}")
    converged = np.full(len(offsets), residual < tol)
    inside = (prev > sl.alpha) & (prev < sl.beta)
    out = EquilibriumSamples("kappa", offsets, prev, converged, horizon, residual, inside)
    if strict and not out.all_converged:
        raise NoConvergence(f"middle copy residual {residual:.3g} above tol {tol:.3g}",
                            horizon_cap=t0 * 2.0**doublings, partial=out)
    return out


# ---------------------------------------------------------------------------
# export


def write_slice_csv(path, slice_: AttractorSlice, kappa: EquilibriumSamples | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["fiber_offset", "alpha", "beta"] + (["kappa"] if kappa is not None else [])
        w.writerow(head)
        for j, s in enumerate(slice_.offsets):
            row = [repr(float(s)), repr(float(slice_.alpha[j])), repr(float(slice_.beta[j]))]
            if kappa is not None:
                row.append(repr(float(kappa.values[j])))
            w.writerow(row)
