"""Minimal-set census, parameter scans and bifurcation pattern matching.

A census is summarized by a key:

* ``1``: only the zero copy;
* ``3``: lower copy < 0 < upper copy;
* ``3u`` / ``3l``: zero plus an attractive and a repulsive copy above / below;
* ``2u`` / ``2l``: zero plus one attractive copy above / below.

The run of keys along a scan is matched against the classified diagrams.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import attractor as at
from . import base_flow as bf
from . import dynamics as dy
from . import spectrum as sp
from .errors import BlowUp, Inconclusive, NoConvergence, PatternUnresolved, SymbolicDriver

LAMBDA_PATTERNS = ("SaddleNodeTranscritical", "ClassicalPitchfork", "GeneralizedPitchfork")
MU_PATTERNS = ("NoBifurcation", "TwoSaddleNodes", "WeakGeneralizedTranscritical")
BIFURCATION_KINDS = ("saddle_node", "transcritical_endpoint_lower", "transcritical_endpoint_upper",
                     "pitchfork", "generalized_lower", "mu_saddle_lower", "mu_saddle_upper")


@dataclass
class ScanConfig:
    tol: float = 1e-6
    grid_points: int = 41
    fibers: int = 8
    tol_bif: float | None = None
    max_bisect: int = 40
    tol_hyp: float = sp.TOL_HYP
    t0: float = at.T0
    doublings: int = at.DOUBLINGS
    exponent_horizon: float | None = None
    jobs: int = 1

    def bif_tol(self, width: float) -> float:
        return self.tol_bif if self.tol_bif is not None else 1e-3 * width


@dataclass(frozen=True)
class CopyRecord:
    position: str
    source: str
    value: float
    exponent: sp.ExponentReport | None


@dataclass(frozen=True)
class MinimalSetCensus:
    count: int
    key: str
    sets: tuple
    offsets: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    kappa: np.ndarray | None = field(default=None, repr=False)

    def exponent_of(self, source: str) -> float | None:
        for c in self.sets:
            if c.source == source and c.exponent is not None:
                return c.exponent.value
        return None


@dataclass
class CensusPoint:
    parameter: float
    census: MinimalSetCensus | None
    reason: str | None = None

    @property
    def key(self) -> str | None:
        return None if self.census is None else self.census.key


@dataclass(frozen=True)
class BifurcationPoint:
    value: float
    kind: str
    uncertainty: float


@dataclass
class DiagramReport:
    scan: str
    parameter_range: tuple
    grid: list
    points: list
    refinement: list
    bifurcation_points: list
    pattern: str | None
    side: str
    spectrum: sp.SpectrumInterval
    expected: str | None = None
    notes: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def census_dict(p: CensusPoint):
            out = {"parameter": p.parameter}
            if p.census is None:
                out.update(status="inconclusive", reason=p.reason)
                return out
            c = p.census
            out.update(status="ok", count=c.count, key=c.key, sets=[
                {"position": s.position, "source": s.source, "value": s.value,
                 "exponent": None if s.exponent is None else s.exponent.value,
                 "classification": None if s.exponent is None else s.exponent.classification}
                for s in c.sets])
            return out

        return {
            "scan": self.scan,
            "range": list(self.parameter_range),
            "config": self.config,
            "spectrum": {"lo": self.spectrum.lo, "hi": self.spectrum.hi,
                         "exactness": self.spectrum.exactness},
            "grid": list(self.grid),
            "census": [census_dict(p) for p in self.points],
            "refinement": [census_dict(p) for p in self.refinement],
            "bifurcation_points": [asdict(b) for b in self.bifurcation_points],
            "pattern": self.pattern,
            "side": self.side,
            "expected": self.expected,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def points_of(self, kind: str) -> list[BifurcationPoint]:
        return [b for b in self.bifurcation_points if b.kind == kind]


# ---------------------------------------------------------------------------
# census


def _side_status(vmin, vmax, converged, tol):
    sig = at.side_signature(vmin, vmax, tol)
    if sig == "zero":
        # pullback values bound the delimiter from outside, so this holds
        # even before convergence
        return "zero"
    if not converged:
        return "unconverged"
    return sig


def count_minimal_sets(family: dy.Family, driver: bf.Driver, grid: at.FiberGrid,
                       cfg: ScanConfig | None = None) -> MinimalSetCensus:
    """Census of the minimal sets for one parameter value.

    Raises
    ------
    Inconclusive
        When a delimiter or the middle copy does not converge, or a delimiter
        is neither clearly zero nor clearly separated from zero.
    """
    cfg = cfg or ScanConfig()
    tol = cfg.tol
    sl = at.pullback_slice(family, driver, grid, tol, cfg.t0, cfg.doublings)
    up = _side_status(float(sl.beta.min()), float(sl.beta.max()), sl.converged_upper, tol)
    lo = _side_status(float(np.abs(sl.alpha).min()), float(np.abs(sl.alpha).max()),
                      sl.converged_lower, tol)
    for name, st in (("upper", up), ("lower", lo)):
        if st not in ("zero", "distinct"):
            raise Inconclusive(f"{name} delimiter {st}")

    def expo(eq):
        return sp.lyapunov_on_equilibrium(family, driver, eq, cfg.exponent_horizon,
                                          tol_hyp=cfg.tol_hyp)

    offsets = sl.offsets
    zero = CopyRecord("zero", "zero", 0.0, expo("zero"))
    if up == "zero" and lo == "zero":
        return MinimalSetCensus(1, "1", (zero,), offsets, sl.alpha, sl.beta)

    try:
        kappa = at.repulsive_middle(family, driver, grid, tol, slice_=sl, t0=cfg.t0,
                                    doublings=cfg.doublings, strict=False)
    except (BlowUp, NoConvergence) as exc:
        raise Inconclusive(f"middle copy failed: {exc}") from None
    kv = kappa.values
    beta_rec = at.EquilibriumSamples("beta", offsets, sl.beta, np.ones(len(offsets), bool))
    alpha_rec = at.EquilibriumSamples("alpha", offsets, sl.alpha, np.ones(len(offsets), bool))

    if up == "distinct" and lo == "distinct":
        if kappa.all_converged and float(np.abs(kv).max()) > at.SEP_FACTOR * tol:
            raise Inconclusive("middle copy away from zero with both delimiters distinct")
        sets = (CopyRecord("below_zero", "alpha", float(sl.alpha[0]), expo(alpha_rec)), zero,
                CopyRecord("above_zero", "beta", float(sl.beta[0]), expo(beta_rec)))
        return MinimalSetCensus(3, "3", sets, offsets, sl.alpha, sl.beta, kv)

    above = up == "distinct"
    outer = sl.beta if above else sl.alpha
    dist_zero = np.abs(kv)
    dist_outer = np.abs(outer - kv)
    if float(dist_zero.max()) < at.PINCH_FACTOR * tol:
        middle = "zero"
    elif not kappa.all_converged:
        raise Inconclusive("middle copy did not converge")
    elif float(dist_zero.min()) > at.SEP_FACTOR * tol and float(dist_outer.min()) > at.SEP_FACTOR * tol:
        middle = "distinct"
    else:
        raise Inconclusive("middle copy too close to a neighbouring copy")
    pos = "above_zero" if above else "below_zero"
    src = "beta" if above else "alpha"
    outer_rec = CopyRecord(pos, src, float(outer[0]), expo(beta_rec if above else alpha_rec))
    suffix = "u" if above else "l"
    if middle == "zero":
        sets = (zero, outer_rec) if above else (outer_rec, zero)
        return MinimalSetCensus(2, "2" + suffix, sets, offsets, sl.alpha, sl.beta, kv)
    mid = CopyRecord(pos, "kappa", float(kv[0]), expo(kappa))
    sets = (zero, mid, outer_rec) if above else (outer_rec, mid, zero)
    return MinimalSetCensus(3, "3" + suffix, sets, offsets, sl.alpha, sl.beta, kv)


# ---------------------------------------------------------------------------
# scans


class _Evaluator:
    def __init__(self, family, driver, grid, cfg, param):
        self.family, self.driver, self.grid, self.cfg, self.param = family, driver, grid, cfg, param
        self.memo: dict[float, CensusPoint] = {}

    def fam(self, v):
        return self.family.with_params(lam=v) if self.param == "lambda" else self.family.with_params(mu=v)

    def __call__(self, v: float) -> CensusPoint:
        v = float(v)
        if v not in self.memo:
            try:
                c = count_minimal_sets(self.fam(v), self.driver, self.grid, self.cfg)
                self.memo[v] = CensusPoint(v, c)
            except Inconclusive as exc:
                self.memo[v] = CensusPoint(v, None, exc.reason)
        return self.memo[v]

    def many(self, values):
        values = [float(v) for v in values]
        todo = [v for v in values if v not in self.memo]
        if self.cfg.jobs > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.cfg.jobs) as pool:
                list(pool.map(self, todo))
        return [self(v) for v in values]


def _refine(ev: _Evaluator, a, ka, b, kb, tol_bif, budget):
    stack = [(a, ka, b, kb)]
    while stack:
        a, ka, b, kb = stack.pop()
        it = 0
        while b - a > tol_bif and it < budget:
            it += 1
            m = 0.5 * (a + b)
            km = ev(m).key
            if km is None:
                for q in (a + 0.25 * (b - a), a + 0.75 * (b - a)):
                    kq = ev(q).key
                    if kq is not None:
                        m, km = q, kq
                        break
                if km is None:
                    break
            if km == ka:
                a = m
            elif km == kb:
                b = m
            else:
                stack.append((m, km, b, kb))
                b, kb = m, km


def _runs(ev: _Evaluator):
    pts = sorted((p for p in ev.memo.values() if p.key is not None), key=lambda p: p.parameter)
    runs = []
    for p in pts:
        if runs and runs[-1]["key"] == p.key:
            runs[-1]["last"] = p.parameter
        else:
            runs.append({"key": p.key, "first": p.parameter, "last": p.parameter})
    return runs


def _transition(runs, i) -> tuple[float, float]:
    lo, hi = runs[i]["last"], runs[i + 1]["first"]
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def _run_scan(family, driver, prange, grid, cfg, param):
    if driver.is_symbolic:
        raise SymbolicDriver("parameter scans need a trajectory driver")
    cfg = cfg or ScanConfig()
    grid = grid or at.FiberGrid.uniform(driver, cfg.fibers)
    lo, hi = float(prange[0]), float(prange[1])
    if not hi > lo:
        raise ValueError("empty parameter range")
    values = list(np.linspace(lo, hi, cfg.grid_points))
    ev = _Evaluator(family, driver, grid, cfg, param)
    points = ev.many(values)
    conc = [p for p in points if p.key is not None]
    tol_bif = cfg.bif_tol(hi - lo)
    for p, q in zip(conc, conc[1:]):
        if p.key != q.key:
            _refine(ev, p.parameter, p.key, q.parameter, q.key, tol_bif, cfg.max_bisect)
    grid_set = {float(v) for v in values}
    refinement = sorted((p for v, p in ev.memo.items() if v not in grid_set), key=lambda p: p.parameter)
    return cfg, points, refinement, _runs(ev)


def _config_dict(cfg: ScanConfig, grid_used_fibers: int | None = None) -> dict:
    d = asdict(cfg)
    d.pop("jobs", None)
    return d


def _lambda_spectrum(family, driver) -> sp.SpectrumInterval:
    return sp.sacker_sell(driver, dy.coef_fn(driver, family.form.a1))


def match_lambda(runs, spectrum: sp.SpectrumInterval, tol_bif: float):
    """Pattern, side, bifurcation points and notes for a run of census keys."""
    keys = [r["key"] for r in runs]
    notes = []
    if len(keys) >= 2 and keys[0] == "1" and keys[-1] == "3":
        mid = keys[1:-1]
        if not mid:
            v, u = _transition(runs, 0)
            return "ClassicalPitchfork", "both", [BifurcationPoint(v, "pitchfork", u)], notes
        first = mid[0]
        side_char = first[-1]
        side = "lower_collides" if side_char == "u" else "upper_collides"
        if first[0] == "3" and all(k in ("3" + side_char, "2" + side_char) for k in mid) \
                and mid == sorted(mid, reverse=True):
            pts = [BifurcationPoint(*_transition(runs, 0)[:1], "saddle_node", _transition(runs, 0)[1])]
            v_up, u_up = _transition(runs, len(keys) - 2)
            if len(mid) == 2:
                v_lo, u_lo = _transition(runs, 1)
            else:
                v_lo, u_lo = v_up, u_up
            pts.append(BifurcationPoint(v_lo, "transcritical_endpoint_lower", u_lo))
            pts.append(BifurcationPoint(v_up, "transcritical_endpoint_upper", u_up))
            return "SaddleNodeTranscritical", side, pts, notes
        if mid == ["2" + side_char]:
            v0, u0 = _transition(runs, 0)
            v1, u1 = _transition(runs, 1)
            lam_minus = -spectrum.hi
            if spectrum.is_point and spectrum.exactness == "exact":
                notes.append("two-set window observed with point spectrum; inconsistent with "
                             "the generalized pitchfork")
            elif v0 + u0 + tol_bif >= lam_minus:
                return "GeneralizedPitchfork", side, [
                    BifurcationPoint(v0, "generalized_lower", u0),
                    BifurcationPoint(v1, "transcritical_endpoint_upper", u1)], notes
            notes.append("two-set window opens below the lower spectral endpoint")
    return None, "unknown", [], notes


def match_mu(runs):
    keys = [r["key"] for r in runs]
    if keys == ["3"]:
        return "NoBifurcation", [], []
    if keys == ["3l", "1", "3u"]:
        v1, u1 = _transition(runs, 0)
        v2, u2 = _transition(runs, 1)
        return "TwoSaddleNodes", [BifurcationPoint(v1, "mu_saddle_lower", u1),
                                  BifurcationPoint(v2, "mu_saddle_upper", u2)], []
    if keys in (["2l", "2u"], ["2l", "1", "2u"]):
        v1, u1 = _transition(runs, 0)
        v2, u2 = _transition(runs, len(keys) - 2)
        return "WeakGeneralizedTranscritical", [BifurcationPoint(v1, "mu_saddle_lower", u1),
                                                BifurcationPoint(v2, "mu_saddle_upper", u2)], []
    return None, [], []


def scan_lambda(family: dy.Family, driver: bf.Driver, lambda_range, grid: at.FiberGrid | None = None,
                cfg: ScanConfig | None = None, strict: bool = True) -> DiagramReport:
    """Census along a lambda grid, bisection of every change, and pattern matching.

    Raises
    ------
    PatternUnresolved
        When the conclusive census points match no classified diagram (the
        partial report is attached) and ``strict`` is set.
    """
    cfg = cfg or ScanConfig()
    spec = _lambda_spectrum(family, driver)
    cfg, points, refinement, runs = _run_scan(family, driver, lambda_range, grid, cfg, "lambda")
    tol_bif = cfg.bif_tol(float(lambda_range[1]) - float(lambda_range[0]))
    pattern, side, bifs, notes = match_lambda(runs, spec, tol_bif)
    if driver.uniquely_ergodic:
        notes.append("uniquely ergodic driver: point spectrum, so the generalized pitchfork "
                     "cannot be observed along trajectories")
    excluded = sum(p.key is None for p in points)
    if excluded:
        notes.append(f"{excluded} inconclusive grid points excluded from matching")
    report = DiagramReport("lambda", (float(lambda_range[0]), float(lambda_range[1])),
                           [p.parameter for p in points], points, refinement, bifs, pattern, side,
                           spec, None, notes, _config_dict(cfg))
    if pattern is None and strict:
        raise PatternUnresolved("lambda scan matches no classified diagram: "
                                + " -> ".join(r["key"] for r in runs), report)
    return report


def expected_mu_pattern(spec: sp.SpectrumInterval) -> str:
    if spec.lo > 0:
        return "NoBifurcation"
    if spec.hi < 0:
        return "TwoSaddleNodes"
    return "WeakGeneralizedTranscritical"


def scan_mu(family: dy.Family, driver: bf.Driver, mu_range, grid: at.FiberGrid | None = None,
            cfg: ScanConfig | None = None, strict: bool = True) -> DiagramReport:
    """Census along a mu grid for ``x' = f + mu x^2`` and pattern matching.

    The spectrum of the linear coefficient (shifted by the family's lambda)
    gives the expected pattern, recorded next to the observed one.
    """
    cfg = cfg or ScanConfig()
    spec = _lambda_spectrum(family, driver).shifted(family.lam)
    expected = expected_mu_pattern(spec)
    cfg, points, refinement, runs = _run_scan(family, driver, mu_range, grid, cfg, "mu")
    pattern, bifs, notes = match_mu(runs)
    side = "unknown"
    if pattern is not None and pattern != expected:
        notes.append(f"observed {pattern} differs from the spectrum-based expectation {expected}")
    excluded = sum(p.key is None for p in points)
    if excluded:
        notes.append(f"{excluded} inconclusive grid points excluded from matching")
    report = DiagramReport("mu", (float(mu_range[0]), float(mu_range[1])),
                           [p.parameter for p in points], points, refinement, bifs, pattern, side,
                           spec, expected, notes, _config_dict(cfg))
    if pattern is None and strict:
        raise PatternUnresolved("mu scan matches no classified diagram: "
                                + " -> ".join(r["key"] for r in runs), report)
    return report


# ---------------------------------------------------------------------------
# export


CSV_COLUMNS = ("parameter", "fiber_offset", "alpha", "beta", "kappa",
               "exponent_lower", "exponent_zero", "exponent_upper")


def _fmt(v):
    return "" if v is None else repr(float(v))


def diagram_rows(report: DiagramReport):
    pts = sorted(report.points + report.refinement, key=lambda p: p.parameter)
    for p in pts:
        c = p.census
        if c is None:
            yield [_fmt(p.parameter), "", "", "", "", "", "", ""]
            continue
        e_lo, e_zero, e_up = c.exponent_of("alpha"), c.exponent_of("zero"), c.exponent_of("beta")
        for j, s in enumerate(c.offsets):
            kap = None if c.kappa is None else c.kappa[j]
            yield [_fmt(p.parameter), _fmt(s), _fmt(c.alpha[j]), _fmt(c.beta[j]), _fmt(kap),
                   _fmt(e_lo), _fmt(e_zero), _fmt(e_up)]


def write_diagram_csv(report: DiagramReport, path) -> None:
    """Per-fiber diagram data; missing values are empty fields."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in diagram_rows(report):
            w.writerow(row)


def write_fiber0_csv(report: DiagramReport, path) -> None:
    """Compact diagram: delimiters and middle copy at the first fiber."""
    name = report.scan
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([name, "alpha_at_fiber0", "beta_at_fiber0", "kappa_at_fiber0"])
        for p in sorted(report.points + report.refinement, key=lambda p: p.parameter):
            c = p.census
            if c is None:
                w.writerow([_fmt(p.parameter), "", "", ""])
                continue
            kap = None if c.kappa is None else c.kappa[0]
            w.writerow([_fmt(p.parameter), _fmt(c.alpha[0]), _fmt(c.beta[0]), _fmt(kap)])


def finite_or_none(v):
    return None if v is None or not math.isfinite(v) else v
