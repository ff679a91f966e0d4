"""Concrete base flows and coefficient functions evaluated along their orbits.

A fiber of the base is identified with a time offset along one generating
orbit, so a coefficient ``a`` on the fiber ``s`` at time ``t`` is ``a(s + t)``.
Trajectory drivers (autonomous, periodic, quasi-periodic) evaluate
coefficients pointwise; the symbolic driver only stores integrals against
finitely many ergodic measures together with global extrema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

import numpy as np

from .errors import ConfigInvalid, SymbolicDriver, UnknownCoefficient

BOUNDS_GRID = 4096
TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# coefficient representations


@dataclass(frozen=True, slots=True)
class Constant:
    value: float


@dataclass(frozen=True, slots=True)
class TrigSeries:
    """``mean + sum_k sum_n cos[k][n-1] cos(n th_k) + sin[k][n-1] sin(n th_k)``.

    ``th_k`` is the angle of the k-th base frequency. A flat list of
    harmonics is accepted for single-frequency drivers.
    """

    mean: float
    cos: tuple = ()
    sin: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "cos", _nested(self.cos))
        object.__setattr__(self, "sin", _nested(self.sin))


@dataclass(frozen=True, slots=True)
class LogComposite:
    """Either ``exp(power * b) * factor`` or, with ``derivative``, ``b'``."""

    b: Any
    factor: Any = None
    power: float = 1.0
    derivative: bool = False


@dataclass(frozen=True, slots=True)
class TableEntry:
    """Integrals against each ergodic measure plus the global extrema."""

    integrals: tuple
    min: float
    max: float

    def __post_init__(self):
        ints = tuple(float(v) for v in self.integrals)
        object.__setattr__(self, "integrals", ints)
        if not ints:
            raise ValueError("table entry needs at least one integral")
        if not (self.min <= min(ints) and max(ints) <= self.max):
            raise ValueError("table extrema must enclose every integral")


CoefficientFn = Union[Constant, TrigSeries, LogComposite, TableEntry]


def _nested(rows) -> tuple:
    rows = tuple(rows)
    if not rows:
        return ()
    if all(isinstance(r, (int, float, np.floating, np.integer)) for r in rows):
        return (tuple(float(v) for v in rows),)
    return tuple(tuple(float(v) for v in r) for r in rows)


# ---------------------------------------------------------------------------
# driver kinds


@dataclass(frozen=True, slots=True)
class Autonomous:
    pass


@dataclass(frozen=True, slots=True)
class Periodic:
    period: float

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")


@dataclass(frozen=True, slots=True)
class QuasiPeriodic:
    """Linear flow on a torus; frequencies are recorded, not checked, as independent."""

    frequencies: tuple
    phases: tuple = ()

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.frequencies)
        if not freqs:
            raise ValueError("quasi-periodic driver needs at least one frequency")
        phases = tuple(float(p) for p in self.phases) or (0.0,) * len(freqs)
        if len(phases) != len(freqs):
            raise ValueError("one phase per frequency")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "phases", tuple(p % TWO_PI for p in phases))


@dataclass(frozen=True)
class MeasureTable:
    n: int
    integrals: Mapping[str, tuple]
    extrema: Mapping[str, tuple]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one ergodic measure")
        for cid, ints in self.integrals.items():
            if len(ints) != self.n:
                raise ValueError(f"coefficient {cid}: expected {self.n} integrals")
            lo, hi = self.extrema[cid]
            if not (lo <= min(ints) and max(ints) <= hi):
                raise ValueError(f"coefficient {cid}: extrema must enclose integrals")

    def spectrum(self, cid: str) -> tuple[float, float]:
        ints = self.integrals[cid]
        return float(min(ints)), float(max(ints))


@dataclass(frozen=True, slots=True)
class SymbolicFiniteErgodic:
    table: MeasureTable


DriverKind = Union[Autonomous, Periodic, QuasiPeriodic, SymbolicFiniteErgodic]


@dataclass(frozen=True)
class Driver:
    """A base flow together with its named coefficient functions.

    ``offset`` shifts the generating point along its orbit, so that
    ``eval(d, a, s + t) == eval(d.shifted(s), a, t)``.
    """

    kind: DriverKind
    coefficients: Mapping[str, CoefficientFn]
    offset: float = 0.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        symbolic = isinstance(self.kind, SymbolicFiniteErgodic)
        for cid, c in self.coefficients.items():
            if symbolic and not isinstance(c, (TableEntry, Constant)):
                raise ValueError(f"symbolic driver coefficient {cid} must be a table entry")
            if not symbolic and isinstance(c, TableEntry):
                raise ValueError(f"trajectory driver coefficient {cid} cannot be a table entry")
            if symbolic and isinstance(c, TableEntry) and len(c.integrals) != self.kind.table.n:
                raise ValueError(f"coefficient {cid}: expected {self.kind.table.n} integrals")

    @classmethod
    def from_table(cls, table: MeasureTable) -> "Driver":
        coeffs = {
            cid: TableEntry(table.integrals[cid], *table.extrema[cid]) for cid in table.integrals
        }
        return cls(SymbolicFiniteErgodic(table), coeffs)

    @property
    def is_symbolic(self) -> bool:
        return isinstance(self.kind, SymbolicFiniteErgodic)

    @property
    def uniquely_ergodic(self) -> bool:
        return not self.is_symbolic

    @property
    def frequencies(self) -> np.ndarray:
        k = self.kind
        if isinstance(k, Periodic):
            return np.array([TWO_PI / k.period])
        if isinstance(k, QuasiPeriodic):
            return np.array(k.frequencies)
        return np.zeros(1)

    @property
    def phases(self) -> np.ndarray:
        k = self.kind
        if isinstance(k, QuasiPeriodic):
            return np.array(k.phases)
        return np.zeros(1)

    @property
    def period(self) -> float | None:
        return self.kind.period if isinstance(self.kind, Periodic) else None

    def shifted(self, s: float) -> "Driver":
        return Driver(self.kind, self.coefficients, self.offset + s)

    def with_coefficients(self, **extra: CoefficientFn) -> "Driver":
        merged = dict(self.coefficients)
        merged.update(extra)
        if self.is_symbolic:
            table = self.kind.table
            ints = dict(table.integrals)
            ext = dict(table.extrema)
            for cid, c in extra.items():
                if isinstance(c, TableEntry):
                    ints[cid] = c.integrals
                    ext[cid] = (c.min, c.max)
            kind = SymbolicFiniteErgodic(MeasureTable(table.n, ints, ext))
            return Driver(kind, merged, self.offset)
        return Driver(self.kind, merged, self.offset)

    def coefficient(self, cid: str) -> CoefficientFn:
        try:
            return self.coefficients[cid]
        except KeyError:
            raise UnknownCoefficient(cid) from None


# ---------------------------------------------------------------------------
# canonical form: every trajectory coefficient is g * exp(e), g and e trig series


@dataclass(frozen=True)
class Series:
    """Dense trig series with shape (K, N) harmonic arrays."""

    mean: float
    c: np.ndarray
    s: np.ndarray

    @classmethod
    def zero(cls, k: int) -> "Series":
        return cls(0.0, np.zeros((k, 0)), np.zeros((k, 0)))

    @property
    def n(self) -> int:
        return self.c.shape[1]

    def is_constant(self) -> bool:
        return not (np.any(self.c) or np.any(self.s))

    def padded(self, n: int) -> "Series":
        k = self.c.shape[0]
        c = np.zeros((k, n))
        s = np.zeros((k, n))
        c[:, : self.n] = self.c
        s[:, : self.n] = self.s
        return Series(self.mean, c, s)

    def __add__(self, other: "Series") -> "Series":
        n = max(self.n, other.n)
        a, b = self.padded(n), other.padded(n)
        return Series(a.mean + b.mean, a.c + b.c, a.s + b.s)

    def scaled(self, f: float) -> "Series":
        return Series(self.mean * f, self.c * f, self.s * f)

    def derivative(self, omega: np.ndarray) -> "Series":
        n = np.arange(1, self.n + 1)[None, :] * omega[:, None]
        return Series(0.0, self.s * n, -self.c * n)

    def angle_values(self, theta: np.ndarray, k: int) -> np.ndarray:
        """Contribution of the k-th base angle, without the mean."""
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for j in range(self.n):
            cj, sj = self.c[k, j], self.s[k, j]
            if cj:
                out += cj * np.cos((j + 1) * theta)
            if sj:
                out += sj * np.sin((j + 1) * theta)
        return out

    def values(self, thetas: list[np.ndarray]) -> np.ndarray:
        out = np.full(np.shape(thetas[0]), self.mean, dtype=float)
        for k, th in enumerate(thetas):
            out = out + self.angle_values(th, k)
        return out

    def abs_sum(self) -> float:
        return float(np.abs(self.c).sum() + np.abs(self.s).sum())

    def angle_lipschitz(self, k: int) -> float:
        n = np.arange(1, self.n + 1)
        return float(np.sum(n * (np.abs(self.c[k]) + np.abs(self.s[k]))))

    def to_trig(self) -> TrigSeries:
        return TrigSeries(self.mean, tuple(map(tuple, self.c)), tuple(map(tuple, self.s)))


def _series_from_trig(ts: TrigSeries, k: int) -> Series:
    rows = max(len(ts.cos), len(ts.sin))
    if rows > k:
        raise ValueError(f"series uses {rows} base frequencies, driver has {k}")
    n = max([len(r) for r in ts.cos + ts.sin] + [0])
    c = np.zeros((k, n))
    s = np.zeros((k, n))
    for i, r in enumerate(ts.cos):
        c[i, : len(r)] = r
    for i, r in enumerate(ts.sin):
        s[i, : len(r)] = r
    return Series(ts.mean, c, s)


def canonical(driver: Driver, cid_or_fn) -> tuple[Series, Series]:
    """Reduce a trajectory coefficient to the pair (g, e) with value g*exp(e)."""
    if driver.is_symbolic:
        raise SymbolicDriver("symbolic drivers have no pointwise coefficients")
    fn = driver.coefficient(cid_or_fn) if isinstance(cid_or_fn, str) else cid_or_fn
    key = ("canon", id(fn))
    hit = driver._cache.get(key)
    if hit is not None and hit[0] is fn:
        return hit[1]
    res = _canonical(driver, fn)
    driver._cache[key] = (fn, res)
    return res


def _canonical(driver: Driver, fn) -> tuple[Series, Series]:
    k = len(driver.frequencies)
    if isinstance(fn, str):
        return canonical(driver, fn)
    if isinstance(fn, (int, float)):
        fn = Constant(float(fn))
    if isinstance(fn, Constant):
        return Series(float(fn.value), np.zeros((k, 0)), np.zeros((k, 0))), Series.zero(k)
    if isinstance(fn, TrigSeries):
        return _series_from_trig(fn, k), Series.zero(k)
    if isinstance(fn, LogComposite):
        bg, be = _canonical(driver, fn.b)
        if not be.is_constant() or be.mean != 0.0:
            raise ValueError("the primitive inside a log-composite must be a trig series")
        if fn.derivative:
            return bg.derivative(driver.frequencies), Series.zero(k)
        factor = Constant(1.0) if fn.factor is None else fn.factor
        fg, fe = _canonical(driver, factor)
        return fg, fe + bg.scaled(float(fn.power))
    if isinstance(fn, TableEntry):
        raise SymbolicDriver("table entries have no pointwise evaluation")
    raise TypeError(f"unsupported coefficient representation {type(fn).__name__}")


def trig_part(driver: Driver, cid_or_fn) -> TrigSeries | None:
    """The coefficient as a plain trig series, or None when it has an exponential factor."""
    g, e = canonical(driver, cid_or_fn)
    if not e.is_constant() or e.mean != 0.0:
        return None
    return g.to_trig()


def _angles(driver: Driver, t) -> list[np.ndarray]:
    t = np.asarray(t, dtype=float) + driver.offset
    return [w * t + p for w, p in zip(driver.frequencies, driver.phases)]


# ---------------------------------------------------------------------------
# operations


def eval(driver: Driver, coeff, t):  # noqa: A001 - mirrors the operation name
    """Value of a coefficient at time ``t`` along the generating orbit.

    Scalars in, scalar out; arrays are evaluated elementwise.
    """
    if driver.is_symbolic:
        raise SymbolicDriver("symbolic drivers have no pointwise evaluation")
    g, e = canonical(driver, coeff)
    th = _angles(driver, t)
    val = g.values(th)
    if not (e.is_constant() and e.mean == 0.0):
        val = val * np.exp(e.values(th))
    return float(val) if np.ndim(val) == 0 else val


def bounds(driver: Driver, coeff) -> tuple[float, float]:
    """Safe enclosure of the range of a coefficient over the hull."""
    fn = driver.coefficient(coeff) if isinstance(coeff, str) else coeff
    if isinstance(fn, Constant):
        return float(fn.value), float(fn.value)
    if isinstance(fn, TableEntry):
        return float(fn.min), float(fn.max)
    if driver.is_symbolic:
        raise SymbolicDriver("only table entries and constants live on symbolic drivers")
    g, e = canonical(driver, fn)
    omega = driver.frequencies
    if not np.any(omega):
        v = eval(driver, fn, 0.0)
        return v, v
    k = len(omega)
    grid = np.arange(BOUNDS_GRID) * (TWO_PI / BOUNDS_GRID)
    spacing = TWO_PI / BOUNDS_GRID
    plain = e.is_constant()
    if plain:
        lo = hi = g.mean
        for j in range(k):
            vals = g.angle_values(grid, j)
            pad = g.angle_lipschitz(j) * spacing
            lo += vals.min() - pad
            hi += vals.max() + pad
        scale = math.exp(e.mean)
        return (lo * scale, hi * scale) if scale > 0 else (lo, hi)
    if k == 1:
        vals = g.values([grid]) * np.exp(e.values([grid]))
        gmax = abs(g.mean) + g.abs_sum()
        emax = e.mean + e.abs_sum()
        lip = (g.angle_lipschitz(0) + gmax * e.angle_lipschitz(0)) * math.exp(emax)
        pad = lip * spacing
        return float(vals.min() - pad), float(vals.max() + pad)
    glo, ghi = bounds(driver, g.to_trig())
    elo, ehi = bounds(driver, e.to_trig())
    corners = [glo * math.exp(elo), glo * math.exp(ehi), ghi * math.exp(elo), ghi * math.exp(ehi)]
    return float(min(corners)), float(max(corners))


def birkhoff(driver: Driver, coeff, horizon: float, window: float,
             tol: float = 1e-12) -> tuple[float, float, float]:
    """Time average of a coefficient and extrema of its sliding-window averages.

    Returns ``(mean, window_min, window_max)``; the integral is computed by the
    adaptive integrator in quadrature mode.
    """
    if driver.is_symbolic:
        raise SymbolicDriver("symbolic drivers have no trajectories")
    if not (horizon >= window > 0):
        raise ValueError("need horizon >= window > 0")
    fn = driver.coefficient(coeff) if isinstance(coeff, str) else coeff
    if isinstance(fn, Constant):
        v = float(fn.value)
        return v, v, v
    from .dynamics import quadrature

    per_window = 32
    dt = window / per_window
    n = int(math.floor(horizon / dt + 1e-9))
    times = np.arange(1, n + 1) * dt
    if times[-1] < horizon:
        times = np.append(times, horizon)
    cum = np.concatenate(([0.0], quadrature(driver, fn, 0.0, times, tol)))
    grid_t = np.concatenate(([0.0], times))
    mean = cum[-1] / horizon
    idx = np.arange(0, n - per_window + 1)
    if idx.size == 0:
        return float(mean), float(mean), float(mean)
    wav = (cum[idx + per_window] - cum[idx]) / (grid_t[idx + per_window] - grid_t[idx])
    return float(mean), float(wav.min()), float(wav.max())


# ---------------------------------------------------------------------------
# JSON descriptors


def coefficient_from_json(obj, path: str) -> CoefficientFn:
    if isinstance(obj, (int, float)):
        return Constant(float(obj))
    if not isinstance(obj, dict):
        raise ConfigInvalid(path, "coefficient must be a number or an object")
    kind = obj.get("type")
    try:
        if kind is None and "integrals" in obj:
            kind = "table"
        if kind in ("const", "constant"):
            return Constant(float(obj["value"]))
        if kind == "trig":
            return TrigSeries(float(obj.get("mean", 0.0)), obj.get("cos", ()), obj.get("sin", ()))
        if kind == "log":
            b = coefficient_from_json(obj["b"], path + ".b")
            factor = obj.get("factor")
            factor = None if factor is None else coefficient_from_json(factor, path + ".factor")
            return LogComposite(b, factor, float(obj.get("power", 1.0)), bool(obj.get("derivative", False)))
        if kind == "table":
            return TableEntry(tuple(obj["integrals"]), float(obj["min"]), float(obj["max"]))
    except KeyError as exc:
        raise ConfigInvalid(f"{path}.{exc.args[0]}", "missing field") from None
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(path, str(exc)) from None
    raise ConfigInvalid(path + ".type", f"unknown coefficient type {kind!r}")


def coefficient_to_json(fn: CoefficientFn):
    if isinstance(fn, Constant):
        return {"type": "const", "value": fn.value}
    if isinstance(fn, TrigSeries):
        return {"type": "trig", "mean": fn.mean, "cos": [list(r) for r in fn.cos],
                "sin": [list(r) for r in fn.sin]}
    if isinstance(fn, LogComposite):
        out = {"type": "log", "b": coefficient_to_json(fn.b), "power": fn.power,
               "derivative": fn.derivative}
        if fn.factor is not None:
            out["factor"] = coefficient_to_json(fn.factor)
        return out
    if isinstance(fn, TableEntry):
        return {"type": "table", "integrals": list(fn.integrals), "min": fn.min, "max": fn.max}
    raise TypeError(type(fn).__name__)


def driver_from_json(obj, path: str = "driver") -> Driver:
    if not isinstance(obj, dict):
        raise ConfigInvalid(path, "driver must be an object")
    kind = obj.get("kind")
    coeffs_raw = obj.get("coefficients", {})
    if not isinstance(coeffs_raw, dict):
        raise ConfigInvalid(path + ".coefficients", "must be an object")
    coeffs = {cid: coefficient_from_json(v, f"{path}.coefficients.{cid}") for cid, v in coeffs_raw.items()}
    try:
        if kind == "autonomous":
            return Driver(Autonomous(), coeffs)
        if kind == "periodic":
            if "period" not in obj:
                raise ConfigInvalid(path + ".period", "missing field")
            return Driver(Periodic(float(obj["period"])), coeffs)
        if kind in ("quasiperiodic", "quasi-periodic", "quasi_periodic"):
            if "frequencies" not in obj:
                raise ConfigInvalid(path + ".frequencies", "missing field")
            return Driver(QuasiPeriodic(tuple(obj["frequencies"]), tuple(obj.get("phases", ()))), coeffs)
        if kind == "symbolic":
            if "n" not in obj:
                raise ConfigInvalid(path + ".n", "missing field")
            n = int(obj["n"])
            ints, ext = {}, {}
            for cid, c in coeffs.items():
                if isinstance(c, Constant):
                    c = TableEntry((c.value,) * n, c.value, c.value)
                    coeffs[cid] = c
                ints[cid] = c.integrals
                ext[cid] = (c.min, c.max)
            return Driver(SymbolicFiniteErgodic(MeasureTable(n, ints, ext)), coeffs)
    except ConfigInvalid:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(path, str(exc)) from None
    raise ConfigInvalid(path + ".kind", f"unknown driver kind {kind!r}")


def driver_to_json(driver: Driver) -> dict:
    k = driver.kind
    coeffs = {cid: coefficient_to_json(c) for cid, c in sorted(driver.coefficients.items())}
    if isinstance(k, Autonomous):
        out = {"kind": "autonomous"}
    elif isinstance(k, Periodic):
        out = {"kind": "periodic", "period": k.period}
    elif isinstance(k, QuasiPeriodic):
        out = {"kind": "quasiperiodic", "frequencies": list(k.frequencies), "phases": list(k.phases)}
    else:
        out = {"kind": "symbolic", "n": k.table.n}
    out["coefficients"] = coeffs
    return out
