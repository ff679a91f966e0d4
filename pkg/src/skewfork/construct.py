"""Synthesis of coefficients with a prescribed diagram.

Covers the exponential change of variables, a linear coefficient with
bounded primitive giving the classical pitchfork, measure tables of bump
functions on finitely ergodic bases, and the band-spectrum pipeline feeding
the generalized-pitchfork criterion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import base_flow as bf
from . import criteria as cr
from . import dynamics as dy
from . import spectrum as sp
from .errors import (BisectionFailed, EpsilonTooLarge, NoSignChange, SingularMatrix,
                     TargetUnreachable)

BUMP_FLOOR = 1e-3
SYNTH_GRID = 8192


# ---------------------------------------------------------------------------
# change of variables


def negated(fn) -> bf.TrigSeries:
    """``-b`` for a trig-series primitive."""
    ts = fn if isinstance(fn, bf.TrigSeries) else None
    if ts is None:
        raise TypeError("only trig-series primitives can be negated")
    neg = lambda rows: tuple(tuple(-v for v in r) for r in rows)  # noqa: E731
    return bf.TrigSeries(-ts.mean, neg(ts.cos), neg(ts.sin))


def change_of_variables(family: dy.Family, driver: bf.Driver, b,
                        prefix: str = "cv") -> tuple[dy.Family, bf.Driver]:
    """Cubic satisfied by ``y = exp(-b) x``.

    The new coefficients are ``exp(2b) a3``, ``exp(b) a2`` and ``a1 - b'``;
    they are added to the driver under ``<prefix>_a3`` and so on, and the
    returned family refers to them. Minimal sets correspond one-to-one, so
    the diagram is unchanged.
    """
    if not isinstance(family.form, dy.Cubic):
        raise TypeError("the change of variables applies to cubic families")
    bfn = driver.coefficient(b) if isinstance(b, str) else b
    form = family.form
    a3 = bf.LogComposite(bfn, factor=_ref_fn(driver, form.a3), power=2.0)
    a2 = bf.LogComposite(bfn, factor=_ref_fn(driver, form.a2), power=1.0)
    lin_g, lin_e = bf.canonical(driver, _ref_fn(driver, form.a1))
    if not (lin_e.is_constant() and lin_e.mean == 0.0):
        raise TypeError("the linear coefficient must be a plain trig series")
    deriv, _ = bf.canonical(driver, bf.LogComposite(bfn, derivative=True))
    a1 = (lin_g + deriv.scaled(-1.0)).to_trig()
    names = {k: f"{prefix}_{k}" for k in ("a3", "a2", "a1")}
    new_driver = driver.with_coefficients(**{names["a3"]: a3, names["a2"]: a2, names["a1"]: a1})
    new_form = dy.Cubic(names["a3"], names["a2"], names["a1"])
    return dy.Family(new_form, family.lam, family.mu, family.linear_test_mode), new_driver


def _ref_fn(driver: bf.Driver, ref):
    if isinstance(ref, str):
        return driver.coefficient(ref)
    if isinstance(ref, (int, float)):
        return bf.Constant(float(ref))
    return ref


# ---------------------------------------------------------------------------
# classical pitchfork from a sign-changing a2


@dataclass
class PitchforkSynthesis:
    a1: bf.TrigSeries
    b: bf.TrigSeries
    s: float
    residual: float
    verdict: cr.CriteriaVerdict

    def driver(self, base: bf.Driver) -> bf.Driver:
        return base.with_coefficients(a1=self.a1, b=self.b)


def _raised_cosine(t, lo, hi):
    out = np.zeros_like(t)
    inside = (t > lo) & (t < hi)
    out[inside] = 0.5 * (1.0 - np.cos(2.0 * math.pi * (t[inside] - lo) / (hi - lo)))
    return out


def _longest_run(mask: np.ndarray) -> tuple[int, int] | None:
    """Longest cyclic run of True as (start, length) in grid indices."""
    n = mask.size
    if mask.all():
        return 0, n
    if not mask.any():
        return None
    start = int(np.argmin(mask))  # a False entry; runs never wrap past it
    best, cur, cur_start = (0, 0), 0, None
    for k in range(1, n + 1):
        i = (start + k) % n
        if mask[i]:
            if cur == 0:
                cur_start = start + k
            cur += 1
            if cur > best[1]:
                best = (cur_start, cur)
        else:
            cur = 0
    return best


def _bump_on(mask, t, period, margin=0.1):
    i0, length = _longest_run(mask)
    dt = period / t.size
    # a run of grid cells [i0, i0 + length) spans half a cell beyond its end points
    lo = (i0 - 0.5) * dt + margin * length * dt
    hi = (i0 + length - 0.5) * dt - margin * length * dt
    # evaluate on the unwrapped window, then fold back onto [0, period)
    shifted = np.mod(t - lo, period) + lo
    return _raised_cosine(shifted, lo, hi)


def _fourier(values: np.ndarray, harmonics: int) -> bf.TrigSeries:
    n = values.size
    coef = np.fft.rfft(values) / n
    mean = float(coef[0].real)
    c = 2.0 * coef[1:harmonics + 1].real
    s = -2.0 * coef[1:harmonics + 1].imag
    return bf.TrigSeries(mean, [tuple(c)], [tuple(s)])


def synthesize_a1_for_pitchfork(driver: bf.Driver, a2, harmonics: int = 64,
                                floor: float = BUMP_FLOOR) -> PitchforkSynthesis:
    """Linear coefficient ``a1 = b'`` for which the cubic has the classical pitchfork.

    Two raised-cosine bumps are placed inside the positive and negative sets
    of ``a2`` (plus a uniform floor); ``b = log(s c1 + (1 - s) c2)`` is
    truncated to ``harmonics`` Fourier modes and ``s`` is found by root
    bracketing so that the mean of ``exp(b) a2`` vanishes.

    Raises
    ------
    NoSignChange
        When ``a2`` does not take both signs.
    BisectionFailed
        When the weighted mean does not change sign over ``s`` in (0, 1) or
        the root misses the residual target.
    """
    if driver.period is None:
        raise TypeError("the synthesis needs a periodic driver")
    period = driver.period
    t = np.arange(SYNTH_GRID) * (period / SYNTH_GRID)
    a2v = np.asarray(bf.eval(driver, a2, t), dtype=float)
    zero = 1e-12 * float(np.max(np.abs(a2v)))
    pos, neg = a2v > zero, a2v < -zero
    if not (pos.any() and neg.any()):
        raise NoSignChange("a2 must take both signs")
    c1 = _bump_on(pos, t, period) + floor
    c2 = _bump_on(neg, t, period) + floor

    def primitive(s):
        return _fourier(np.log(s * c1 + (1.0 - s) * c2), harmonics)

    def weighted_mean(s):
        b = primitive(s)
        bv = np.asarray(bf.eval(driver, b, t), dtype=float)
        return float(np.mean(np.exp(bv) * a2v))

    f0, f1 = weighted_mean(1e-12), weighted_mean(1.0 - 1e-12)
    if not f0 * f1 < 0:
        raise BisectionFailed("weighted mean keeps its sign over s in (0, 1)")
    s = brentq(weighted_mean, 1e-12, 1.0 - 1e-12, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    b = primitive(s)
    probe = driver.with_coefficients(b=b, a2=driver.coefficient(a2) if isinstance(a2, str) else a2)
    residual = sp.sacker_sell_mean(probe, bf.LogComposite("b", factor="a2", power=1.0))
    if not abs(residual) < 1e-10:
        raise BisectionFailed(f"weighted mean residual {residual:.3g} above 1e-10")
    deriv, _ = bf.canonical(probe, bf.LogComposite("b", derivative=True))
    a1 = deriv.to_trig()
    verdict = cr.classify_cp_case(probe.with_coefficients(a1=a1), "b", "a2")
    return PitchforkSynthesis(a1, b, float(s), float(residual), verdict)


# ---------------------------------------------------------------------------
# finitely ergodic bases


def epsilon1(n: int, r: float) -> float:
    """Largest admissible bump-table leakage for ``n`` measures and ratio ``r``."""
    if n < 2 or r < 1:
        raise ValueError("need n >= 2 and r >= 1")
    q = r * (n - 1)
    return (n + 2.0 * q - 2.0 * math.sqrt(q * (q + n))) / n**2


@dataclass(frozen=True)
class BumpTable:
    """Integrals ``matrix[i, j]`` of bump ``j`` against measure ``i``."""

    n: int
    epsilon: float
    matrix: np.ndarray = field(repr=False)
    extrema: tuple = ()
    disjoint: bool = True

    def check(self) -> bool:
        d = np.diag(self.matrix)
        off = self.matrix[~np.eye(self.n, dtype=bool)]
        return bool(np.all(d > 1 - self.epsilon) and np.all(d <= 1) and np.all(off >= 0)
                    and np.all(off < self.epsilon))

    def measure_table(self, entries: dict[str, bf.TableEntry]) -> bf.MeasureTable:
        return bf.MeasureTable(self.n, {k: e.integrals for k, e in entries.items()},
                               {k: (e.min, e.max) for k, e in entries.items()})


def bump_table(n: int, epsilon: float) -> BumpTable:
    """Table with diagonal ``1 - epsilon/2`` and off-diagonal ``epsilon/2``."""
    if not 0 < epsilon < 1:
        raise ValueError("need 0 < epsilon < 1")
    if n < 1:
        raise ValueError("need n >= 1")
    m = np.full((n, n), epsilon / 2.0)
    np.fill_diagonal(m, 1.0 - epsilon / 2.0)
    return BumpTable(n, float(epsilon), m, tuple((0.0, 1.0) for _ in range(n)), True)


@dataclass
class A1Synthesis:
    a1: bf.TableEntry
    spectrum: sp.SpectrumInterval
    condition_52: bool
    gap_ok: bool
    witnesses: dict


def a1_from_alphas(table: BumpTable, alphas, r: float) -> A1Synthesis:
    """``a1 = sum alpha_i c_i`` on the bump table, with its spectrum and the band condition.

    Raises
    ------
    EpsilonTooLarge
        When the table leakage is not below ``epsilon1(n, r)``.
    """
    a = np.asarray(alphas, dtype=float)
    if a.size != table.n or table.n < 2:
        raise ValueError("need one alpha per bump and at least two bumps")
    if np.any(np.diff(a) < 0) or not (a[0] < 0 < a[-1]):
        raise ValueError("need alpha_1 <= ... <= alpha_n with alpha_1 < 0 < alpha_n")
    eps1 = epsilon1(table.n, r)
    if not table.epsilon < eps1:
        raise EpsilonTooLarge(f"epsilon {table.epsilon} not below {eps1:.6g}")
    ints = table.matrix @ a
    # rows of the fixed-leakage table sum past 1 for n >= 3, so integrals
    # may leave [alpha_1, alpha_n]; the stored extrema are widened to match
    widened = bool(ints.min() < a[0] or ints.max() > a[-1])
    entry = bf.TableEntry(tuple(ints), float(min(a[0], ints.min())), float(max(a[-1], ints.max())))
    spec = sp.SpectrumInterval(float(ints.min()), float(ints.max()))
    lam_minus, lam_plus = spec.as_lambda_bounds()
    gap = lam_plus - lam_minus
    floor = (1.0 - table.n * table.epsilon) * (a[-1] - a[0])
    cond = gap**2 + 4.0 * r * (lam_plus + a[0]) * (lam_plus + a[-1])
    w = {"gap": gap, "gap_floor": floor, "condition_52": cond, "epsilon1": eps1,
         "extrema_widened": widened}
    return A1Synthesis(entry, spec, bool(cond > 0), bool(gap > floor > 0), w)


@dataclass
class ProjectionResult:
    alphas: np.ndarray
    residual_integrals: np.ndarray


def _dominant(m: np.ndarray) -> bool:
    d = np.abs(np.diag(m))
    off = np.abs(m).sum(axis=1) - d
    return bool(np.all(d > off))


def project_onto_span(table: BumpTable, a: bf.TableEntry) -> ProjectionResult:
    """Coefficients of the element of the bump span with the same integrals as ``a``.

    Raises
    ------
    SingularMatrix
        Unless the table is strictly diagonally dominant (a sufficient
        invertibility test).
    """
    m = table.matrix
    v = np.asarray(a.integrals, dtype=float)
    if v.size != table.n:
        raise ValueError("integral count does not match the table")
    if not _dominant(m):
        raise SingularMatrix("table is not strictly diagonally dominant")
    alphas = np.linalg.solve(m, v)
    return ProjectionResult(alphas, v - m @ alphas)


@dataclass
class BandRealization:
    a1: bf.TableEntry
    alphas: np.ndarray
    table: BumpTable
    bounds: cr.Bounds
    a2_window: tuple
    spectrum: sp.SpectrumInterval
    verdict: cr.CriteriaVerdict
    driver: bf.Driver = field(repr=False)


def realize_band_spectrum(target, n: int = 2, r: float = 1.0) -> BandRealization:
    """Symbolic driver whose linear coefficient has spectrum ``target`` and an a2 window.

    ``target`` is ``(lo, hi)`` = ``[-lambda_plus, -lambda_minus]``. The bump
    integrals are set to ``lo``, ..., ``hi`` (evenly spaced) and solved for the
    bump amplitudes. The returned driver carries ``a1``, ``a3`` in ``[1, r]``
    and ``a2`` spanning the middle third of the window, so ``cubic_verdict``
    ensures the generalized pitchfork.

    Raises
    ------
    TargetUnreachable
        For a point target, or when the amplitudes do not straddle zero.
    """
    lo, hi = float(target[0]), float(target[1])
    if not lo < hi:
        raise TargetUnreachable("a band spectrum needs lo < hi")
    if n < 2:
        raise TargetUnreachable("a band spectrum needs at least two ergodic measures")
    eps1 = epsilon1(n, r)
    eps = 0.1 if 0.1 < eps1 else 0.5 * eps1
    table = bump_table(n, eps)
    v = np.linspace(lo, hi, n)
    alphas = project_onto_span(table, bf.TableEntry(tuple(v), lo, hi)).alphas
    if not (alphas[0] < 0 < alphas[-1]) or np.any(np.diff(alphas) < 0):
        raise TargetUnreachable("bump amplitudes must straddle zero; shift a1 by a constant")
    syn = a1_from_alphas(table, alphas, r)
    k1, k2 = float(alphas[0]), float(alphas[-1])
    if not (k1 < lo and hi < k2):
        raise TargetUnreachable("extrema must lie strictly outside a band spectrum")
    bounds = cr.Bounds(k1, k2, 1.0, float(r))
    win = cr.window(bounds, syn.spectrum)
    if not win[0] < win[1]:
        raise TargetUnreachable("empty a2 window")
    third = (win[1] - win[0]) / 3.0
    a2 = (win[0] + third, win[1] - third)
    verdict = cr.cubic_verdict(bounds, syn.spectrum, a2)
    a2_entry = bf.TableEntry(tuple(np.full(n, 0.5 * (a2[0] + a2[1]))), a2[0], a2[1])
    a3_entry = bf.TableEntry(tuple(np.ones(n)), 1.0, float(r))
    entries = {"a1": syn.a1, "a2": a2_entry, "a3": a3_entry}
    driver = bf.Driver.from_table(table.measure_table(entries))
    return BandRealization(syn.a1, alphas, table, bounds, win, syn.spectrum, verdict, driver)
