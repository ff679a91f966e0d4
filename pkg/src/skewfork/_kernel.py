"""Compiled Dormand-Prince 5(4) integrator with PI step control.

The right-hand side is passed as a compiled function ``rhs(mode, t, x, y, args)``
returning ``(dx, dy)``. The auxiliary component ``y`` accumulates an integral
along the trajectory:

* mode 0: plain flow, ``y`` unused;
* mode 1: ``y' = f_x(t, x)`` (exponent accumulation);
* mode 2: ``x' = 0`` and ``y' = coefficient(t)`` (quadrature).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK, BLOWUP, UNDERFLOW, MAXSTEPS = 0, 1, 2, 3

# Dormand-Prince tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

SAFE = 0.9
BETA = 0.04
EXPO1 = 0.2 - BETA * 0.75
FAC_MAX_DECREASE = 5.0  # 1/facc1
FAC_MAX_INCREASE = 0.1  # 1/facc2


@njit(cache=True, nogil=True)
def coefficient(slot, t, args):
    """Evaluate packed coefficient ``slot`` as ``g * exp(e)`` at time t."""
    omega, phase, means, cs, sn, nh = args[0], args[1], args[2], args[3], args[4], args[5]
    g = means[slot, 0]
    e = means[slot, 1]
    ng = nh[slot, 0]
    ne = nh[slot, 1]
    nmax = ng if ng > ne else ne
    if nmax > 0:
        for k in range(omega.shape[0]):
            th = omega[k] * t + phase[k]
            c1 = math.cos(th)
            s1 = math.sin(th)
            cn = c1
            snn = s1
            for n in range(nmax):
                if n < ng:
                    g += cs[slot, 0, k, n] * cn + sn[slot, 0, k, n] * snn
                if n < ne:
                    e += cs[slot, 1, k, n] * cn + sn[slot, 1, k, n] * snn
                tmp = cn * c1 - snn * s1
                snn = snn * c1 + cn * s1
                cn = tmp
    if e != 0.0:
        return g * math.exp(e)
    return g


@njit(cache=True, nogil=True)
def cubic_rhs(mode, t, x, y, args):
    """Cubic family -a3 x^3 + (a2 + mu) x^2 + (a1 + lam) x, or (a1 + lam) x when linear."""
    lam, mu, linear = args[6], args[7], args[8]
    if mode == 2:
        return 0.0, coefficient(3, t, args)
    a1 = coefficient(2, t, args) + lam
    if linear:
        return a1 * x, a1
    a3 = coefficient(0, t, args)
    a2 = coefficient(1, t, args) + mu
    f = ((-a3 * x + a2) * x + a1) * x
    if mode == 1:
        return f, (-3.0 * a3 * x + 2.0 * a2) * x + a1
    return f, 0.0


@njit(cache=True, nogil=True)
def _err_norm(mode, x, xn, ex, y, yn, ey, tol):
    sx = tol + tol * max(abs(x), abs(xn))
    rx = ex / sx
    if mode == 0:
        return abs(rx)
    sy = tol + tol * max(abs(y), abs(yn))
    ry = ey / sy
    if mode == 2:
        return abs(ry)
    return math.sqrt(0.5 * (rx * rx + ry * ry))


@njit(cache=True, nogil=True)
def dopri(rhs, args, mode, t0, x0, t_out, tol, guard, hmax, max_steps):
    """Integrate from (t0, x0) through every time in ``t_out``.

    ``t_out`` must be monotone in the direction of integration. Returns
    ``(xs, ys, status, t_stop, steps)``; on failure the arrays are filled up
    to the last reached output.
    """
    n_out = t_out.shape[0]
    xs = np.full(n_out, np.nan)
    ys = np.full(n_out, np.nan)
    t = t0
    x = x0
    y = 0.0
    if n_out == 0:
        return xs, ys, OK, t, 0
    t_end = t_out[n_out - 1]
    span = abs(t_end - t0)
    direction = 1.0 if t_end >= t0 else -1.0
    hmin = 1e-14 * span
    i = 0
    while i < n_out and t_out[i] == t0:
        xs[i] = x
        ys[i] = y
        i += 1
    if i == n_out:
        return xs, ys, OK, t, 0

    k1x, k1y = rhs(mode, t, x, y, args)

    # initial step guess (Hairer-Norsett-Wanner)
    sk = tol + tol * abs(x)
    d0 = abs(x) / sk
    d1 = max(abs(k1x), abs(k1y)) / sk
    if d0 < 1e-10 or d1 < 1e-10:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, hmax, span)
    fx, fy = rhs(mode, t + direction * h0, x + direction * h0 * k1x, y + direction * h0 * k1y, args)
    d2 = max(abs(fx - k1x), abs(fy - k1y)) / sk / h0
    dd = max(d1, d2)
    if dd <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dd) ** 0.2
    h = min(100.0 * h0, h1, hmax, span)

    err_old = 1e-4
    steps = 0
    rejected = False
    while i < n_out:
        if steps >= max_steps:
            return xs, ys, MAXSTEPS, t, steps
        rem = abs(t_out[i] - t)
        habs = min(h, rem, hmax)
        hit = habs >= rem
        if hit:
            habs = rem
        hs = direction * habs

        k2x, k2y = rhs(mode, t + C2 * hs, x + hs * A21 * k1x, y + hs * A21 * k1y, args)
        k3x, k3y = rhs(mode, t + C3 * hs, x + hs * (A31 * k1x + A32 * k2x),
                       y + hs * (A31 * k1y + A32 * k2y), args)
        k4x, k4y = rhs(mode, t + C4 * hs, x + hs * (A41 * k1x + A42 * k2x + A43 * k3x),
                       y + hs * (A41 * k1y + A42 * k2y + A43 * k3y), args)
        k5x, k5y = rhs(mode, t + C5 * hs,
                       x + hs * (A51 * k1x + A52 * k2x + A53 * k3x + A54 * k4x),
                       y + hs * (A51 * k1y + A52 * k2y + A53 * k3y + A54 * k4y), args)
        k6x, k6y = rhs(mode, t + hs,
                       x + hs * (A61 * k1x + A62 * k2x + A63 * k3x + A64 * k4x + A65 * k5x),
                       y + hs * (A61 * k1y + A62 * k2y + A63 * k3y + A64 * k4y + A65 * k5y), args)
        xn = x + hs * (A71 * k1x + A73 * k3x + A74 * k4x + A75 * k5x + A76 * k6x)
        yn = y + hs * (A71 * k1y + A73 * k3y + A74 * k4y + A75 * k5y + A76 * k6y)
        tn = t_out[i] if hit else t + hs
        k7x, k7y = rhs(mode, tn, xn, yn, args)
        steps += 1

        ex = hs * (E1 * k1x + E3 * k3x + E4 * k4x + E5 * k5x + E6 * k6x + E7 * k7x)
        ey = hs * (E1 * k1y + E3 * k3y + E4 * k4y + E5 * k5y + E6 * k6y + E7 * k7y)
        err = _err_norm(mode, x, xn, ex, y, yn, ey, tol)
        if not math.isfinite(err) or not math.isfinite(xn):
            err = 1e10

        fac11 = err ** EXPO1 if err > 0.0 else 0.0
        if err <= 1.0:
            fac = fac11 / err_old ** BETA
            fac = max(FAC_MAX_INCREASE, min(FAC_MAX_DECREASE, fac / SAFE))
            hnew = habs / fac
            if rejected:
                hnew = min(hnew, habs)
            err_old = max(err, 1e-4)
            rejected = False
            t = tn
            x = xn
            y = yn
            k1x = k7x
            k1y = k7y
            if abs(x) > guard:
                return xs, ys, BLOWUP, t, steps
            if hit:
                xs[i] = x
                ys[i] = y
                i += 1
                # keep the controller proposal unless the step was clipped short
                h = max(hnew, h) if habs < h else hnew
            else:
                h = hnew
        else:
            h = habs / min(FAC_MAX_DECREASE, fac11 / SAFE)
            rejected = True
            if h < hmin:
                return xs, ys, UNDERFLOW, t, steps
    return xs, ys, OK, t, steps
