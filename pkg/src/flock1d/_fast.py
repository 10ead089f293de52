"""Numba-compiled inner loops for the pairwise interaction dynamics.

These drivers are what production runs use; the numpy forms in :mod:`model`
and :mod:`kinetic` remain the documented contract and cross-check them in the
tests.  All loops use a fixed summation order (ascending index), so results
are deterministic and independent of thread count.  ``nogil=True`` lets
independent runs execute concurrently from Python threads.
"""

import numpy as np
from numba import njit

# Dormand-Prince 5(4) coefficients.
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    35.0 / 384.0 - 5179.0 / 57600.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
)

OK = 0
MONOTONE_BROKEN = 1
NON_FINITE = 2


@njit(cache=True, nogil=True, inline="always")
def _antideriv(d, beta):
    # sgn(d) |d|^(1-beta) / (1-beta), with a sqrt fast path for beta = 1/2
    a = abs(d)
    if a == 0.0:
        return 0.0
    if beta == 0.5:
        m = np.sqrt(a)
    else:
        m = a ** (1.0 - beta)
    if d < 0.0:
        m = -m
    return m / (1.0 - beta)


@njit(cache=True, nogil=True)
def first_order_drift(x, omega, beta, out):
    """out_i = omega_i + (1/N) sum_j Psi(x_j - x_i)."""
    n = x.shape[0]
    for i in range(n):
        s = 0.0
        xi = x[i]
        for j in range(n):
            s += _antideriv(x[j] - xi, beta)
        out[i] = omega[i] + s / n
    return out


@njit(cache=True, nogil=True)
def weighted_drift(chi, omega_level, mass, beta, out):
    """out_l = omega_l + sum_m mass_m Psi(chi_m - chi_l)  (mass-level method)."""
    n = chi.shape[0]
    for i in range(n):
        s = 0.0
        ci = chi[i]
        for j in range(n):
            s += mass[j] * _antideriv(chi[j] - ci, beta)
        out[i] = omega_level[i] + s
    return out


@njit(cache=True, nogil=True)
def _n_records(n_steps, record_every):
    n_rec = 1 + n_steps // record_every
    if n_steps % record_every != 0:
        n_rec += 1
    return n_rec


@njit(cache=True, nogil=True)
def rk4_first_order(x0, omega, beta, dt, n_steps, record_every):
    """Fixed-step RK4 for the first-order system.

    Returns (times, states, n_recorded, status, bad_step); states rows beyond
    n_recorded are untouched scratch.  status is OK or NON_FINITE.
    """
    n = x0.shape[0]
    n_rec = _n_records(n_steps, record_every)
    times = np.empty(n_rec)
    xs = np.empty((n_rec, n))
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    times[0] = 0.0
    xs[0] = x
    r = 1
    status = OK
    bad_step = -1
    for step in range(1, n_steps + 1):
        first_order_drift(x, omega, beta, k1)
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        first_order_drift(tmp, omega, beta, k2)
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        first_order_drift(tmp, omega, beta, k3)
        for i in range(n):
            tmp[i] = x[i] + dt * k3[i]
        first_order_drift(tmp, omega, beta, k4)
        finite = True
        for i in range(n):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not np.isfinite(x[i]):
                finite = False
        if not finite:
            status = NON_FINITE
            bad_step = step
            break
        if step % record_every == 0 or step == n_steps:
            times[r] = step * dt
            xs[r] = x
            r += 1
    return times, xs, r, status, bad_step


@njit(cache=True, nogil=True)
def rk4_levels(chi0, omega_level, mass, offsets, beta, dt, n_steps, record_every, mono_tol):
    """Fixed-step RK4 for the mass-level (pseudo-inverse) system.

    ``offsets`` delimits the velocity slices in the flat level arrays; after
    every step each slice must stay nondecreasing within ``mono_tol``.
    Equal-drift levels merge in finite time along the flow, so ordering dips
    inside the tolerance band are stepping noise at a merge: they are clamped
    to exact equality (merged levels share omega and position, hence drift,
    and stay together).  Dips beyond the band are a genuine stepping failure.
    Returns (times, states, n_recorded, status, bad_step).
    """
    n = chi0.shape[0]
    n_slices = offsets.shape[0] - 1
    n_rec = _n_records(n_steps, record_every)
    times = np.empty(n_rec)
    chis = np.empty((n_rec, n))
    chi = chi0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    times[0] = 0.0
    chis[0] = chi
    r = 1
    status = OK
    bad_step = -1
    for step in range(1, n_steps + 1):
        weighted_drift(chi, omega_level, mass, beta, k1)
        for i in range(n):
            tmp[i] = chi[i] + 0.5 * dt * k1[i]
        weighted_drift(tmp, omega_level, mass, beta, k2)
        for i in range(n):
            tmp[i] = chi[i] + 0.5 * dt * k2[i]
        weighted_drift(tmp, omega_level, mass, beta, k3)
        for i in range(n):
            tmp[i] = chi[i] + dt * k3[i]
        weighted_drift(tmp, omega_level, mass, beta, k4)
        ok = True
        for i in range(n):
            chi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not np.isfinite(chi[i]):
                ok = False
        if not ok:
            status = NON_FINITE
            bad_step = step
            break
        for m in range(n_slices):
            for l in range(offsets[m], offsets[m + 1] - 1):
                if chi[l + 1] < chi[l]:
                    if chi[l] - chi[l + 1] > mono_tol:
                        status = MONOTONE_BROKEN
                        bad_step = step
                    else:
                        chi[l + 1] = chi[l]
            if status != OK:
                break
        if status != OK:
            break
        if step % record_every == 0 or step == n_steps:
            times[r] = step * dt
            chis[r] = chi
            r += 1
    return times, chis, r, status, bad_step


@njit(cache=True, nogil=True)
def second_order_deriv(y, beta, dy):
    """Derivative of the stacked state y = (x_1..x_N, v_1..v_N).

    Returns the minimum pairwise gap seen; at an exact coincidence the
    (infinite) pair term is skipped and the zero gap is reported instead, so
    the caller's gap guard fires before garbage propagates.
    """
    n = y.shape[0] // 2
    min_gap = np.inf
    for i in range(n):
        dy[i] = y[n + i]
    for i in range(n):
        s = 0.0
        xi = y[i]
        vi = y[n + i]
        for j in range(n):
            if j == i:
                continue
            d = y[j] - xi
            a = abs(d)
            if a < min_gap:
                min_gap = a
            if a == 0.0:
                continue
            if beta == 0.5:
                w = 1.0 / np.sqrt(a)
            else:
                w = a ** (-beta)
            s += w * (y[n + j] - vi)
        dy[n + i] = s / n
    return min_gap


@njit(cache=True, nogil=True)
def dopri_step(y, beta, h, abs_tol, rel_tol):
    """One Dormand-Prince 5(4) step of the second-order system.

    Returns (y_new, err_ratio, min_gap): the fifth-order proposal, the scaled
    error (accept when <= 1; NaN on overflow counts as a rejection), and the
    smallest pairwise gap seen across all stage states and the proposal.
    """
    m = y.shape[0]
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    k5 = np.empty(m)
    k6 = np.empty(m)
    k7 = np.empty(m)
    tmp = np.empty(m)
    y_new = np.empty(m)

    min_gap = second_order_deriv(y, beta, k1)
    for i in range(m):
        tmp[i] = y[i] + h * _A21 * k1[i]
    g = second_order_deriv(tmp, beta, k2)
    min_gap = min(min_gap, g)
    for i in range(m):
        tmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
    g = second_order_deriv(tmp, beta, k3)
    min_gap = min(min_gap, g)
    for i in range(m):
        tmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
    g = second_order_deriv(tmp, beta, k4)
    min_gap = min(min_gap, g)
    for i in range(m):
        tmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
    g = second_order_deriv(tmp, beta, k5)
    min_gap = min(min_gap, g)
    for i in range(m):
        tmp[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i])
    g = second_order_deriv(tmp, beta, k6)
    min_gap = min(min_gap, g)
    for i in range(m):
        y_new[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i])
    g = second_order_deriv(y_new, beta, k7)
    min_gap = min(min_gap, g)

    err_ratio = 0.0
    for i in range(m):
        err = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
        scale = abs_tol + rel_tol * max(abs(y[i]), abs(y_new[i]))
        ratio = abs(err) / scale
        if not ratio <= err_ratio:  # propagates NaN into err_ratio
            err_ratio = ratio
    return y_new, err_ratio, min_gap
