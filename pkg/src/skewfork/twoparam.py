"""Two-parameter thresholds for ``x' = f + mu x^2 + lambda x``.

``mu_hat(lambda0)`` is the infimum of the ``mu`` for which a hyperbolic
attractive upper copy distinct from zero exists for every larger ``mu``, and
``lambda_hat(mu0)`` is the analogous threshold in ``lambda``. They satisfy
``lambda_hat(mu_hat(l)) == l`` and ``lambda_hat`` is nonincreasing.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import attractor as at
from . import base_flow as bf
from . import diagram as dg
from . import dynamics as dy
from . import spectrum as sp
from .errors import (BracketFailed, Inconclusive, LawViolated, NoConvergence,
                     PreconditionFailed, SymbolicDriver)


@dataclass
class TwoParamConfig:
    lambda_window: tuple = (-10.0, 10.0)
    mu_window: tuple = (-10.0, 10.0)
    tol: float = 1e-4
    law_tol: float = 1e-3
    probe_offsets: tuple | None = None
    max_bisect: int = 60
    scan: dg.ScanConfig = field(default_factory=lambda: dg.ScanConfig(doublings=28))

    @property
    def probes(self) -> tuple:
        if self.probe_offsets is not None:
            return tuple(sorted(self.probe_offsets))
        return (self.tol, 2 * self.tol, 10 * self.tol, 0.1, 1.0)


@dataclass
class Threshold:
    value: float
    uncertainty: float
    bracket: tuple
    evaluations: list

    def __float__(self) -> float:
        return self.value


def upper_copy_exists(family: dy.Family, driver: bf.Driver, lam: float, mu: float,
                      cfg: TwoParamConfig | None = None) -> bool:
    """Whether ``x' = f + mu x^2 + lam x`` has an attractive upper copy away from 0.

    The upper delimiter must be converged and separated from zero on every
    fiber, with a strictly negative exponent.

    Raises
    ------
    Inconclusive
        When the upper delimiter is neither certified zero nor separated.
    """
    cfg = cfg or TwoParamConfig()
    sc = cfg.scan
    fam = family.with_params(lam=lam, mu=mu)
    grid = at.FiberGrid.uniform(driver, sc.fibers)
    sl = at.pullback_slice(fam, driver, grid, sc.tol, sc.t0, sc.doublings)
    sig = at.side_signature(float(sl.beta.min()), float(sl.beta.max()), sc.tol)
    if sig == "zero":
        return False
    if sig != "distinct" or not sl.converged_upper:
        raise Inconclusive(f"upper delimiter {sig if sig != 'distinct' else 'unconverged'}")
    eq = at.EquilibriumSamples("beta", sl.offsets, sl.beta, np.ones(len(sl.offsets), bool))
    try:
        expo = sp.lyapunov_on_equilibrium(fam, driver, eq, sc.exponent_horizon, tol_hyp=sc.tol_hyp)
    except NoConvergence as exc:
        raise Inconclusive(f"upper exponent: {exc}") from exc
    return expo.value < 0


def _probe(family, driver, cfg, lam, mu, param, d):
    try:
        if param == "mu":
            return upper_copy_exists(family, driver, lam, mu + d, cfg)
        return upper_copy_exists(family, driver, lam + d, mu, cfg)
    except Inconclusive:
        return None


def _predicate(family, driver, cfg, lam, mu, param):
    """True when the copy exists at every probe offset, None when undecided.

    Sequentially the probes stop at the first failure; with ``jobs > 1`` all
    probes run in parallel and are reduced in offset order.
    """
    probes = cfg.probes
    if cfg.scan.jobs > 1:
        with ThreadPoolExecutor(cfg.scan.jobs) as pool:
            results = list(pool.map(lambda d: _probe(family, driver, cfg, lam, mu, param, d), probes))
    else:
        results = []
        for d in probes:
            results.append(_probe(family, driver, cfg, lam, mu, param, d))
            if results[-1] is False:
                break
    if any(r is False for r in results):
        return False
    return None if any(r is None for r in results) else True


def _threshold(pred, window, cfg: TwoParamConfig) -> Threshold:
    lo, hi = float(window[0]), float(window[1])
    evals = []

    def ev(x):
        v = pred(x)
        evals.append((x, v))
        return v

    if ev(lo) is not False:
        raise BracketFailed(f"predicate not false at the lower end {lo}")
    if ev(hi) is not True:
        raise BracketFailed(f"predicate not true at the upper end {hi}")
    for _ in range(cfg.max_bisect):
        if hi - lo <= cfg.tol:
            break
        m = 0.5 * (lo + hi)
        v = ev(m)
        if v is None:
            # widen rather than abort: look for a decided point elsewhere in the bracket
            for q in (lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo)):
                v = ev(q)
                if v is not None:
                    m = q
                    break
            if v is None:
                break
        if v:
            hi = m
        else:
            lo = m
    return Threshold(0.5 * (lo + hi), 0.5 * (hi - lo), (lo, hi), evals)


def _lambda_plus(family, driver) -> float:
    spec = sp.sacker_sell(driver, dy.coef_fn(driver, family.form.a1))
    return spec.as_lambda_bounds()[1]


def mu_hat(family: dy.Family, driver: bf.Driver, lambda0: float,
           cfg: TwoParamConfig | None = None) -> Threshold:
    """Threshold in ``mu`` at fixed ``lambda0``.

    Raises
    ------
    PreconditionFailed
        When ``lambda0`` exceeds the upper spectral threshold.
    BracketFailed
        When the predicate does not switch from false to true over the window.
    """
    cfg = cfg or TwoParamConfig()
    if driver.is_symbolic:
        raise SymbolicDriver("thresholds need a trajectory driver")
    lam_plus = _lambda_plus(family, driver)
    if lambda0 > lam_plus + cfg.tol:
        raise PreconditionFailed(f"lambda0 {lambda0} above lambda_plus {lam_plus}")
    return _threshold(lambda m: _predicate(family, driver, cfg, lambda0, m, "mu"), cfg.mu_window, cfg)


def lambda_hat(family: dy.Family, driver: bf.Driver, mu0: float,
               cfg: TwoParamConfig | None = None) -> Threshold:
    """Threshold in ``lambda`` at fixed ``mu0``."""
    cfg = cfg or TwoParamConfig()
    if driver.is_symbolic:
        raise SymbolicDriver("thresholds need a trajectory driver")
    return _threshold(lambda l: _predicate(family, driver, cfg, l, mu0, "lambda"),
                      cfg.lambda_window, cfg)


def verify_laws(family: dy.Family, driver: bf.Driver, lambda0_list, mu_list,
                cfg: TwoParamConfig | None = None, raise_on_fail: bool = True) -> dict:
    """Check ``lambda_hat(mu_hat(l)) == l`` and that ``lambda_hat`` is nonincreasing.

    Both use slack ``2 * cfg.law_tol``.

    Raises
    ------
    LawViolated
        With ``raise_on_fail``, naming the law and the offending input.
    """
    cfg = cfg or TwoParamConfig()
    slack = 2.0 * cfg.law_tol
    identity = []
    for l0 in lambda0_list:
        m = mu_hat(family, driver, l0, cfg).value
        back = lambda_hat(family, driver, m, cfg).value
        ok = abs(back - l0) <= slack
        identity.append({"lambda0": float(l0), "mu_hat": m, "lambda_hat": back, "holds": ok})
        if not ok and raise_on_fail:
            raise LawViolated("identity", {"lambda0": l0, "mu_hat": m, "lambda_hat": back})
    mus = sorted(float(m) for m in mu_list)
    values = [lambda_hat(family, driver, m, cfg).value for m in mus]
    mono = all(b <= a + slack for a, b in zip(values, values[1:]))
    if not mono and raise_on_fail:
        raise LawViolated("nonincreasing", {"mu": mus, "lambda_hat": values})
    return {"identity": identity, "monotone": {"mu": mus, "lambda_hat": values, "holds": mono},
            "assumption": "single threshold per bracket", "slack": slack}


def expected_realized_pattern(lambda0: float, spec: sp.SpectrumInterval, tol: float) -> str:
    lam_minus, lam_plus = spec.as_lambda_bounds()
    if abs(lambda0 - lam_plus) <= tol:
        return "ClassicalPitchfork"
    if lambda0 < lam_minus:
        return "SaddleNodeTranscritical"
    return "GeneralizedPitchfork"


def realize_diagram(family: dy.Family, driver: bf.Driver, lambda0: float,
                    cfg: TwoParamConfig | None = None, lambda_range=None) -> dg.DiagramReport:
    """Scan ``x' = f + mu_hat(lambda0) x^2 + lambda x`` whose lower bifurcation point is ``lambda0``.

    The expected pattern follows from the position of ``lambda0`` relative to
    the spectrum of ``a1``. Symbolic drivers only get the expectation.
    """
    cfg = cfg or TwoParamConfig()
    spec = sp.sacker_sell(driver, dy.coef_fn(driver, family.form.a1))
    expected = expected_realized_pattern(lambda0, spec, cfg.law_tol)
    lam_minus, lam_plus = spec.as_lambda_bounds()
    if driver.is_symbolic:
        notes = ["trajectory verification unavailable for symbolic drivers; expected pattern only"]
        return dg.DiagramReport("lambda", (lambda0, lam_plus), [], [], [], [], None, "unknown",
                                spec, expected, notes, {"lambda0": lambda0})
    th = mu_hat(family, driver, lambda0, cfg)
    lo = min(lambda0, lam_minus) - 1.0
    rng = lambda_range or (lo, lam_plus + 1.0)
    scan_cfg = dg.ScanConfig(**{**dg.asdict(cfg.scan)})
    if scan_cfg.tol_bif is None:
        scan_cfg.tol_bif = cfg.tol * 5
    report = dg.scan_lambda(family.with_params(mu=th.value), driver, rng, cfg=scan_cfg,
                            strict=False)
    report.expected = expected
    report.config.update(lambda0=lambda0, mu_hat=th.value, mu_hat_uncertainty=th.uncertainty)
    if driver.uniquely_ergodic:
        report.notes.append("point spectrum: only the saddle-node/transcritical and classical "
                            "pitchfork outcomes are realizable")
    if report.pattern is not None and report.pattern != expected:
        report.notes.append(f"realized {report.pattern} differs from expected {expected}")
    return report
