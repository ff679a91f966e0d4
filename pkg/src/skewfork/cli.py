"""Command-line entry point: ``skewfork <command> --config PATH``.

Commands are ``scan-lambda``, ``scan-mu``, ``criteria``, ``construct``,
``two-param`` and ``integrate``. Every run writes ``<command>.json`` (the
result plus the fully resolved configuration, deterministic for a fixed
configuration) and a ``<command>.meta.json`` sidecar holding the timestamp.
Scans additionally write CSV diagram data.

Exit codes: 0 on success, 2 when a result is inconclusive or unresolved
(partial output is still written), 1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import base_flow as bf
from . import construct as cs
from . import criteria as cr
from . import diagram as dg
from . import dynamics as dy
from . import spectrum as sp
from . import twoparam as tp
from .errors import ConfigInvalid, Inconclusive, PatternUnresolved, SkewforkError

COMMANDS = ("scan-lambda", "scan-mu", "criteria", "construct", "two-param", "integrate")
CONSTRUCT_MODES = ("pitchfork-a1", "band-spectrum", "project")
FORMATS = ("json", "csv", "both")
ENV_PREFIX = "SKEWFORK_"

_SCAN_FIELDS = {"grid_points": int, "fibers": int, "tol": float, "tol_bif": float, "max_bisect": int,
                "tol_hyp": float, "t0": float, "doublings": int, "exponent_horizon": float}


@dataclass
class RunConfig:
    """A resolved run: command, configuration document and output settings."""

    command: str
    config: dict = field(default_factory=dict)
    out: str = "."
    fmt: str = "both"
    jobs: int | None = None
    tol: float | None = None

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "out": self.out,
                "format": self.fmt, "jobs": self.jobs, "tol": self.tol}

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        return cls(obj["command"], obj.get("config", {}), obj.get("out", "."),
                   obj.get("format", "both"), obj.get("jobs"), obj.get("tol"))


class _Partial(Exception):
    """Carries a partial payload out of a command that ended inconclusively."""

    def __init__(self, payload: dict, reason: str):
        self.payload = payload
        self.reason = reason
        super().__init__(reason)


# ---------------------------------------------------------------------------
# config helpers


def _section(config: dict, name: str) -> dict:
    sec = config.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigInvalid(name, "must be an object")
    return sec


def _number(sec: dict, key: str, path: str, default=None, kind=float):
    if key not in sec:
        if default is None:
            raise ConfigInvalid(f"{path}.{key}", "missing field")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigInvalid(f"{path}.{key}", "must be a number")
    return kind(v)


def _pair(sec: dict, key: str, path: str, default=None) -> tuple:
    if key not in sec:
        if default is None:
            raise ConfigInvalid(f"{path}.{key}", "missing field")
        return default
    v = sec[key]
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
        raise ConfigInvalid(f"{path}.{key}", "must be a pair of numbers")
    if not v[0] <= v[1]:
        raise ConfigInvalid(f"{path}.{key}", "endpoints out of order")
    return float(v[0]), float(v[1])


def _driver(config: dict) -> bf.Driver:
    if "driver" not in config:
        raise ConfigInvalid("driver", "missing field")
    return bf.driver_from_json(config["driver"], "driver")


def _family(config: dict) -> dy.Family:
    return dy.family_from_json(config.get("family", {}), "family")


def _scan_config(sec: dict, run: RunConfig) -> dg.ScanConfig:
    kw = {}
    for key, kind in _SCAN_FIELDS.items():
        if key in sec and sec[key] is not None:
            kw[key] = _number(sec, key, "scan", kind=kind)
    if run.tol is not None:
        kw["tol"] = run.tol
    kw["jobs"] = run.jobs or int(sec.get("jobs", os.cpu_count() or 1))
    cfg = dg.ScanConfig(**kw)
    if not cfg.tol > 0:
        raise ConfigInvalid("scan.tol", "must be positive")
    if cfg.grid_points < 2:
        raise ConfigInvalid("scan.grid_points", "need at least 2 points")
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (frozenset, set)):
        return sorted(_jsonable(v) for v in obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _spectrum_dict(s: sp.SpectrumInterval) -> dict:
    lam_minus, lam_plus = s.as_lambda_bounds()
    return {"lo": s.lo, "hi": s.hi, "exactness": s.exactness,
            "lambda_minus": lam_minus, "lambda_plus": lam_plus}


# ---------------------------------------------------------------------------
# commands


def _cmd_scan(run: RunConfig, which: str):
    config = run.config
    driver, family = _driver(config), _family(config)
    sec = _section(config, "scan")
    rng = _pair(sec, "range", "scan")
    cfg = _scan_config(sec, run)
    fn = dg.scan_lambda if which == "lambda" else dg.scan_mu
    try:
        report = fn(family, driver, rng, cfg=cfg)
    except PatternUnresolved as exc:
        if exc.report is None:
            raise
        raise _Partial({"report": exc.report.to_dict()}, str(exc)) from None
    return {"report": report.to_dict()}, report


def _criteria_inputs(config: dict, sec: dict):
    driver = bf.driver_from_json(config["driver"], "driver") if "driver" in config else None
    if "bounds" in sec:
        b = sec["bounds"]
        if not isinstance(b, dict):
            raise ConfigInvalid("criteria.bounds", "must be an object")
        bounds = cr.Bounds(*(_number(b, k, "criteria.bounds") for k in ("k1", "k2", "r1", "r2")))
    elif driver is not None:
        k1, k2 = bf.bounds(driver, "a1")
        r1, r2 = bf.bounds(driver, "a3")
        bounds = cr.Bounds(k1, k2, r1, r2)
    else:
        raise ConfigInvalid("criteria.bounds", "missing field (no driver to derive it from)")
    if "lambda_minus" in sec or "lambda_plus" in sec:
        lam_minus = _number(sec, "lambda_minus", "criteria")
        lam_plus = _number(sec, "lambda_plus", "criteria")
        if lam_minus > lam_plus:
            raise ConfigInvalid("criteria.lambda_minus", "exceeds lambda_plus")
        spec = sp.SpectrumInterval(-lam_plus, -lam_minus)
    elif driver is not None:
        spec = sp.sacker_sell(driver, "a1")
    else:
        raise ConfigInvalid("criteria.lambda_plus", "missing field (no driver to derive it from)")
    if "a2_range" in sec:
        a2 = _pair(sec, "a2_range", "criteria")
    elif driver is not None:
        a2 = bf.bounds(driver, "a2")
    else:
        raise ConfigInvalid("criteria.a2_range", "missing field (no driver to derive it from)")
    return driver, bounds, spec, a2


def _cmd_criteria(run: RunConfig):
    config = run.config
    sec = _section(config, "criteria")
    driver, bounds, spec, a2 = _criteria_inputs(config, sec)
    out = {"bounds": {"k1": bounds.k1, "k2": bounds.k2, "r1": bounds.r1, "r2": bounds.r2},
           "spectrum": _spectrum_dict(spec), "a2_range": list(a2)}
    h = sec.get("h")
    if h is not None:
        if not isinstance(h, dict):
            raise ConfigInvalid("criteria.h", "must be an object")
        hp = cr.HParams(_number(h, "rho0", "criteria.h"), _number(h, "eps0", "criteria.h"),
                        bounds.r1, bounds.r2)
        verdict = cr.general_h_verdict(bounds, spec, a2, hp)
        s1, s2 = hp.s1, hp.s2
    else:
        verdict = cr.cubic_verdict(bounds, spec, a2)
        s1, s2 = bounds.r1, bounds.r2
    out["verdict"] = verdict.to_dict()
    lam_minus, lam_plus = spec.as_lambda_bounds()
    if lam_plus + bounds.k2 > 0 and -lam_plus - bounds.k1 >= 0:
        scaled = cr.Bounds(bounds.k1, bounds.k2, s1, s2)
        out["generalized_window"] = list(cr.window(scaled, spec))
    cp = sec.get("cp_case")
    if cp is not None:
        if driver is None:
            raise ConfigInvalid("driver", "cp_case needs a driver")
        if not isinstance(cp, dict) or "b" not in cp:
            raise ConfigInvalid("criteria.cp_case.b", "missing field")
        out["cp_case"] = cr.classify_cp_case(driver, cp["b"], cp.get("a2", "a2"), cp.get("a1", "a1"),
                                             cp.get("weighted")).to_dict()
    return out, None


def _cmd_construct(run: RunConfig, mode: str | None):
    config = run.config
    sec = _section(config, "construct")
    mode = mode or sec.get("mode")
    if mode not in CONSTRUCT_MODES:
        raise ConfigInvalid("construct.mode", f"must be one of {', '.join(CONSTRUCT_MODES)}")
    if mode == "pitchfork-a1":
        driver = _driver(config)
        a2 = sec.get("a2", "a2")
        if not isinstance(a2, str):
            a2 = bf.coefficient_from_json(a2, "construct.a2")
        res = cs.synthesize_a1_for_pitchfork(driver, a2, int(_number(sec, "harmonics", "construct", 64)))
        return {"mode": mode, "coefficients": {"a1": bf.coefficient_to_json(res.a1),
                                               "b": bf.coefficient_to_json(res.b)},
                "s": res.s, "residual": res.residual, "verdict": res.verdict.to_dict()}, None
    if mode == "band-spectrum":
        target = _pair(sec, "target", "construct")
        res = cs.realize_band_spectrum(target, int(_number(sec, "n", "construct", 2)),
                                       _number(sec, "r", "construct", 1.0))
        return {"mode": mode, "driver": bf.driver_to_json(res.driver), "alphas": res.alphas,
                "epsilon": res.table.epsilon, "a2_window": list(res.a2_window),
                "spectrum": _spectrum_dict(res.spectrum), "verdict": res.verdict.to_dict(),
                "bounds": {"k1": res.bounds.k1, "k2": res.bounds.k2, "r1": res.bounds.r1,
                           "r2": res.bounds.r2}}, None
    n = int(_number(sec, "n", "construct"))
    eps = _number(sec, "epsilon", "construct")
    ints = sec.get("integrals")
    if not isinstance(ints, list) or len(ints) != n:
        raise ConfigInvalid("construct.integrals", f"must be a list of {n} numbers")
    ints = [float(v) for v in ints]
    table = cs.bump_table(n, eps)
    entry = bf.TableEntry(tuple(ints), min(ints), max(ints))
    res = cs.project_onto_span(table, entry)
    return {"mode": mode, "alphas": res.alphas, "residual_integrals": res.residual_integrals}, None


def _cmd_two_param(run: RunConfig):
    config = run.config
    driver, family = _driver(config), _family(config)
    sec = _section(config, "two_param")
    scan = _scan_config(_section(config, "scan"), run)
    if "doublings" not in _section(config, "scan"):
        scan.doublings = tp.TwoParamConfig().scan.doublings
    cfg = tp.TwoParamConfig(
        lambda_window=_pair(sec, "lambda_window", "two_param", (-10.0, 10.0)),
        mu_window=_pair(sec, "mu_window", "two_param", (-10.0, 10.0)),
        tol=_number(sec, "tol", "two_param", 1e-4),
        law_tol=_number(sec, "law_tol", "two_param", 1e-3),
        probe_offsets=tuple(sec["probe_offsets"]) if "probe_offsets" in sec else None,
        scan=scan)
    lambda0 = _number(sec, "lambda0", "two_param")
    out = {"lambda0": lambda0}
    if not driver.is_symbolic:
        th = tp.mu_hat(family, driver, lambda0, cfg)
        out["mu_hat"] = th.value
        out["mu_hat_uncertainty"] = th.uncertainty
        l0s = sec.get("lambda0_list", [lambda0])
        mus = sec.get("mu_list", [th.value])
        out["law_checks"] = tp.verify_laws(family, driver, l0s, mus, cfg, raise_on_fail=False)
    else:
        out["mu_hat"] = None
        out["law_checks"] = None
    report = None
    if sec.get("realize", True):
        rng = _pair(sec, "lambda_range", "two_param") if "lambda_range" in sec else None
        report = tp.realize_diagram(family, driver, lambda0, cfg, rng)
        out["realized_pattern"] = report.pattern
        out["expected_pattern"] = report.expected
        out["report"] = report.to_dict()
    if report is not None and not driver.is_symbolic and report.pattern is None:
        raise _Partial(out, "realized diagram matches no classified pattern")
    if out["law_checks"] is not None and not (all(r["holds"] for r in out["law_checks"]["identity"])
                                              and out["law_checks"]["monotone"]["holds"]):
        raise _Partial(out, "two-parameter law check failed")
    return out, report if report is not None and report.points else None


def _cmd_integrate(run: RunConfig):
    config = run.config
    driver, family = _driver(config), _family(config)
    sec = _section(config, "integrate")
    t0 = _number(sec, "t0", "integrate", 0.0)
    x0 = _number(sec, "x0", "integrate")
    t_out = sec.get("t_out")
    if not isinstance(t_out, list) or not t_out:
        raise ConfigInvalid("integrate.t_out", "must be a nonempty list of times")
    tol = run.tol if run.tol is not None else _number(sec, "tol", "integrate", 1e-9)
    mode = int(_number(sec, "mode", "integrate", 0))
    if mode not in (0, 1):
        raise ConfigInvalid("integrate.mode", "must be 0 (flow) or 1 (with exponent)")
    xs, ys, status, t_stop = dy.trajectory(family, driver, t0, x0, [float(t) for t in t_out], tol,
                                           mode=mode, raise_on_fail=False)
    out = {"t": [float(t) for t in t_out], "x": xs, "status": int(status), "t_stop": t_stop}
    if mode == 1:
        out["exponent_integral"] = ys
    return out, None


# ---------------------------------------------------------------------------
# persistence


def _write_outputs(run: RunConfig, payload: dict, report, status: str, reason: str | None) -> Path:
    out_dir = Path(run.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = run.command
    doc = {"command": run.command, "status": status, "result": payload,
           "run": run.to_dict(), "version": __version__}
    if reason is not None:
        doc["reason"] = reason
    if run.fmt in ("json", "both"):
        text = json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"
        (out_dir / f"{stem}.json").write_text(text)
    if run.fmt in ("csv", "both"):
        if isinstance(report, dg.DiagramReport):
            dg.write_diagram_csv(report, out_dir / f"{stem}.csv")
            dg.write_fiber0_csv(report, out_dir / f"{stem}.fiber0.csv")
        elif run.command == "integrate" and payload:
            lines = ["t,x"] + [f"{t!r},{'' if not math.isfinite(x) else repr(float(x))}"
                               for t, x in zip(payload["t"], payload["x"])]
            (out_dir / f"{stem}.csv").write_text("\n".join(lines) + "\n")
    return out_dir


def _write_sidecar(run: RunConfig, elapsed: float, exit_code: int) -> None:
    out_dir = Path(run.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "elapsed_seconds": elapsed, "exit_code": exit_code, "argv": sys.argv[1:]}
    (out_dir / f"{run.command}.meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def run(command: str, config: dict, out: str = ".", fmt: str = "both", jobs: int | None = None,
        tol: float | None = None, mode: str | None = None, stream=None) -> int:
    """Execute one command and persist its artifacts; returns the exit code."""
    stream = stream or sys.stderr
    rc = RunConfig(command, config, out, fmt, jobs, tol)
    start = time.perf_counter()
    code = 0
    try:
        if command not in COMMANDS:
            raise ConfigInvalid("command", f"unknown command {command!r}")
        if fmt not in FORMATS:
            raise ConfigInvalid("format", f"must be one of {', '.join(FORMATS)}")
        if not isinstance(config, dict):
            raise ConfigInvalid("config", "top level must be an object")
        if command in ("scan-lambda", "scan-mu"):
            payload, report = _cmd_scan(rc, command.split("-")[1])
        elif command == "criteria":
            payload, report = _cmd_criteria(rc)
        elif command == "construct":
            payload, report = _cmd_construct(rc, mode)
            if mode:
                rc.config = {**config, "construct": {**_section(config, "construct"), "mode": mode}}
        elif command == "two-param":
            payload, report = _cmd_two_param(rc)
        else:
            payload, report = _cmd_integrate(rc)
        _write_outputs(rc, payload, report, "ok", None)
    except _Partial as exc:
        code = 2
        print(f"inconclusive: {exc.reason}", file=stream)
        _write_outputs(rc, exc.payload, None, "inconclusive", exc.reason)
    except (Inconclusive, PatternUnresolved) as exc:
        code = 2
        print(f"inconclusive: {exc}", file=stream)
        _write_outputs(rc, {}, None, "inconclusive", str(exc))
    except ConfigInvalid as exc:
        code = 1
        print(f"invalid configuration at {exc}", file=stream)
    except SkewforkError as exc:
        code = 1
        print(f"error: {type(exc).__name__}: {exc}", file=stream)
    if code != 1 or Path(out).exists():
        _write_sidecar(rc, time.perf_counter() - start, code)
    return code


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigInvalid("--config", str(exc)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("<config>", f"malformed JSON at line {exc.lineno} column {exc.colno}: "
                            f"{exc.msg}") from None


def _env(name: str, kind=str):
    v = os.environ.get(ENV_PREFIX + name)
    if v is None or v == "":
        return None
    try:
        return kind(v)
    except ValueError:
        raise ConfigInvalid(ENV_PREFIX + name, f"cannot parse {v!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skewfork", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        if name == "construct":
            s.add_argument("mode", nargs="?", choices=CONSTRUCT_MODES)
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--out", help="output directory (default: current directory)")
        s.add_argument("--tol", type=float, help="override the integration/pullback tolerance")
        s.add_argument("--jobs", type=int, help="worker threads (default: available CPUs)")
        s.add_argument("--format", choices=FORMATS, help="artifacts to write (default: both)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config or _env("CONFIG"))
        out = args.out or _env("OUT") or "."
        tol = args.tol if args.tol is not None else _env("TOL", float)
        jobs = args.jobs if args.jobs is not None else _env("JOBS", int)
        fmt = args.format or _env("FORMAT") or "both"
    except ConfigInvalid as exc:
        print(f"invalid configuration at {exc}", file=sys.stderr)
        return 1
    if jobs is not None and jobs < 1:
        print("invalid configuration at --jobs: must be at least 1", file=sys.stderr)
        return 1
    return run(args.command, config, out, fmt, jobs, tol, getattr(args, "mode", None))


if __name__ == "__main__":
    sys.exit(main())
