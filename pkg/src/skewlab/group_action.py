"""Rotation action of S^1 on circle profiles together with the quotient metric it induces."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .pde_core import GridFunction, TrigInterpolant, _circle_derivative, wavenumbers

TIE_TOL = 1e-10
DEGENERATE_TOL = 1e-10


class HomogeneousProfileError(ValueError):
    """The profile is spatially constant, so it has no distinguished maximum."""


def _require_circle(u: GridFunction) -> None:
    if u.domain != "circle":
        raise ValueError(f"the shift action is defined on the circle, not on a {u.domain} interval")


def _shift_values(values: np.ndarray, a: float, L: float) -> np.ndarray:
    """Values of x -> u(x + a) on the grid of ``values``."""
    n = values.size
    a = a % L
    m = a * n / L
    mi = round(m)
    if abs(m - mi) < 1e-12 * max(1.0, m):
        return np.roll(values, -(mi % n))
    return np.fft.irfft(np.fft.rfft(values) * _rotation(n, L, a), n)


def shift(u: GridFunction, a: float) -> GridFunction:
    """(sigma_a u)(x) = u(x + a)."""
    _require_circle(u)
    return u.with_values(_shift_values(u.values, a, u.L))


def _roll_distances(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """max_x |u(x) - v(x + m h)| for every grid rotation m."""
    n = u.size
    idx = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n
    return np.max(np.abs(u[None, :] - v[idx]), axis=1)


def shift_scan(u: GridFunction, v: GridFunction, n_shifts: int | None = None):
    """Shifts a_j = j L / n_shifts and the distances ||u - sigma_{a_j} v||."""
    _require_circle(u)
    _require_circle(v)
    if u.n != v.n or u.L != v.L:
        raise ValueError("profiles live on different grids")
    n = u.n
    n_shifts = n if n_shifts is None else int(n_shifts)
    if n_shifts % n:
        # arbitrary shift count: evaluate each shift separately
        a = np.arange(n_shifts) * u.L / n_shifts
        d = np.array([np.max(np.abs(u.values - _shift_values(v.values, aj, u.L))) for aj in a])
        return a, d
    sub = n_shifts // n
    d = np.empty(n_shifts)
    for r in range(sub):
        vr = _shift_values(v.values, r * u.h / sub, u.L) if r else v.values
        d[r::sub] = _roll_distances(u.values, vr)
    return np.arange(n_shifts) * u.L / n_shifts, d


def _rotation(n: int, L: float, a: float) -> np.ndarray:
    """rfft multiplier of x -> u(x + a), keeping the Nyquist mode real."""
    k = wavenumbers(n, L)
    rot = np.exp(1j * k * a)
    if n % 2 == 0:
        rot[-1] = math.cos(k[-1] * a)
    return rot


def sampling_slack(values: np.ndarray, L: float) -> float:
    """Bound on how far the sup of the interpolant can exceed the max over nodes."""
    h = L / values.size
    return 0.125 * h * h * float(np.max(np.abs(_circle_derivative(values, L, 2))))


def _sup_from_spectrum(spec: np.ndarray, n: int, L: float) -> float:
    h = L / n
    k = wavenumbers(n, L)
    values = np.fft.irfft(spec, n)
    mag = np.abs(values)
    top = float(mag.max())
    if top == 0.0:
        return 0.0
    slack = 0.125 * h * h * float(np.max(np.abs(np.fft.irfft(spec * (-k * k), n))))
    peaks = np.nonzero((mag >= np.roll(mag, 1)) & (mag >= np.roll(mag, -1))
                       & (mag >= top - slack))[0]
    # interpolant coefficients: real parts of coef * exp(i k x)
    coef = spec * (2.0 / n)
    coef[0] *= 0.5
    if n % 2 == 0:
        coef[-1] = 0.5 * coef[-1].real
    c1, c2 = coef * (1j * k), coef * (-k * k)
    x0 = peaks * h
    x = x0.copy()
    for _ in range(8):
        ph = np.exp(1j * np.multiply.outer(x, k))
        d1, d2 = (ph @ c1).real, (ph @ c2).real
        ok = d2 != 0.0
        step = np.where(ok, d1 / np.where(ok, d2, 1.0), 0.0)
        x = np.clip(x - step, x0 - h, x0 + h)
        if np.max(np.abs(step)) < 1e-12 * L:
            break
    ph = np.exp(1j * np.multiply.outer(x, k))
    return max(top, float(np.max(np.abs((ph @ coef).real))))


def sup_norm(values: np.ndarray, L: float) -> float:
    """sup_x |w(x)| of the band-limited interpolant of circle samples.

    Unlike the max over grid nodes this is invariant under every shift, so
    distances built on it are symmetric for off-grid shifts too.  Extrema are
    located by Newton steps on w' started from the grid maxima of |w| that
    could hold the global one.
    """
    values = np.asarray(values, dtype=float)
    return _sup_from_spectrum(np.fft.rfft(values), values.size, L)


def _l2_polish(cu: np.ndarray, cv: np.ndarray, n: int, L: float, a0: float, reach: float) -> float:
    """Shift near a0 minimizing ||u - sigma_a v||_2, by Newton steps on the correlation."""
    k = wavenumbers(n, L)
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    P = w * np.conj(cu) * cv
    a = a0
    for _ in range(20):
        e = P * np.exp(1j * k * a)
        g1 = float(np.sum((1j * k * e).real))
        g2 = float(np.sum((-k * k * e).real))
        if g2 >= 0.0:
            break
        da = -g1 / g2
        a = min(max(a + da, a0 - reach), a0 + reach)
        if abs(da) < 1e-15 * L:
            break
    return a


def shift_upper_bound(u: GridFunction, v: GridFunction) -> tuple[float, float]:
    """A shift and the sup distance there, polished from the best grid rotation.

    The value bounds the orbit distance from above and is exact when the two
    profiles lie on one orbit.
    """
    a, d = shift_scan(u, v)
    n, L = u.n, u.L
    cu, cv = np.fft.rfft(u.values), np.fft.rfft(v.values)
    s = _l2_polish(cu, cv, n, L, float(a[int(np.argmin(d))]), u.h)
    return s, _sup_from_spectrum(cu - cv * _rotation(n, L, s), n, L)


def orbit_distance(u: GridFunction, v: GridFunction, n_shifts: int | None = None,
                   refine: bool = True) -> float:
    """min_a ||u - sigma_a v||_inf, the distance between the two group orbits.

    Without ``refine`` the minimum is over a uniform grid of ``n_shifts``
    shifts (default: the grid rotations) with the norm taken over grid nodes.
    With ``refine`` the best grid shifts seed a two-stage bounded search and
    the norm is the sup of the interpolant, which makes the result a
    pseudometric up to the search tolerance.
    """
    a, d = shift_scan(u, v, n_shifts)
    if not refine:
        return float(d.min())
    n, L = u.n, u.L
    cu, cv = np.fft.rfft(u.values), np.fft.rfft(v.values)
    k = wavenumbers(n, L)

    def objective(s):
        return _sup_from_spectrum(cu - cv * _rotation(n, L, s), n, L)

    step = a[1] - a[0] if a.size > 1 else L
    scale = max(float(np.max(np.abs(u.values))), float(np.max(np.abs(v.values))))
    # within one step of a[j] the grid distance drops by at most step max|v'|
    reach = step * float(np.max(np.abs(_circle_derivative(v.values, L, 1))))
    j0 = int(np.argmin(d))
    s0 = _l2_polish(cu, cv, n, L, float(a[j0]), step)
    best = objective(s0)
    if best <= 1e-13 * scale:
        return best
    for j in np.argsort(d, kind="stable")[:3]:
        if d[j] - reach > best:
            continue
        # search over offsets from a[j] so the tolerance is not relative to |a|
        r1 = minimize_scalar(lambda s: objective(a[j] + s), bounds=(-step, step),
                             method="bounded", options={"xatol": 1e-10 * L})
        best = min(best, float(r1.fun))
        if r1.fun < 1e-6 * scale:
            # near-coincident orbits: polish so that the distance reaches rounding level
            a1 = a[j] + r1.x
            width = 1e-6 * L
            r2 = minimize_scalar(lambda s: objective(a1 + s), bounds=(-width, width),
                                 method="bounded", options={"xatol": 1e-15 * L})
            best = min(best, float(r2.fun))
    return best


def best_shift(u: GridFunction, v: GridFunction, n_shifts: int | None = None) -> tuple[float, float]:
    """Shift a minimizing ||u - sigma_a v|| and the attained distance (grid search only)."""
    a, d = shift_scan(u, v, n_shifts)
    j = int(np.argmin(d))
    return float(a[j]), float(d[j])


@dataclass(frozen=True)
class Period:
    L0: float
    homogeneous: bool


def smallest_period(u: GridFunction, tol: float = 1e-8) -> Period:
    """Smallest spatial period L / k*, or the homogeneous sentinel L0 = 0.

    Only divisors L / k are tried: a nonconstant continuous function on the
    circle has a finite cyclic stabilizer.
    """
    _require_circle(u)
    scale = float(np.max(np.abs(u.values)))
    if np.max(np.abs(u.values - u.values.mean())) < tol * max(scale, 1.0):
        return Period(0.0, True)
    for k in range(u.n // 4, 1, -1):
        if np.max(np.abs(u.values - _shift_values(u.values, u.L / k, u.L))) < tol * scale:
            return Period(u.L / k, False)
    return Period(u.L, False)


@dataclass(frozen=True)
class MaxPhase:
    c: float
    max_value: float
    second_deriv: float
    degenerate: bool


def max_phase(u: GridFunction, period: float | None = None) -> MaxPhase:
    """Location of the global maximum, refined on the spectral interpolant.

    Ties within 1e-10 max|u| resolve to the smallest location; with a
    ``period`` the location is reduced modulo it.  ``degenerate`` marks a
    maximum where |u''| < 1e-10 max|u| (2 pi / L)^2.
    """
    _require_circle(u)
    v = u.values
    scale = float(np.max(np.abs(v)))
    spread = float(v.max() - v.min())
    if spread < 1e-12 * max(scale, 1.0):
        raise HomogeneousProfileError("profile is spatially constant")
    interp = TrigInterpolant(v, u.L)
    h, L = u.h, u.L
    # grid local maxima close enough to the top to possibly be the global one
    peaks = np.nonzero((v >= np.roll(v, 1)) & (v >= np.roll(v, -1))
                       & (v >= v.max() - 0.05 * spread))[0]
    cands = []
    for j in peaks:
        x0 = j * h
        lo, hi = x0 - h, x0 + h
        d_lo, d_hi = interp(lo, 1), interp(hi, 1)
        if d_lo > 0 > d_hi:
            x = brentq(lambda s: interp(s, 1), lo, hi, xtol=1e-15)
            # a flat (e.g. quartic) peak leaves the root of u' poorly located;
            # keep the node when refinement gains nothing beyond rounding
            if interp(x) <= interp(x0) + 1e-14 * scale:
                x = x0
        else:
            x = x0
        cands.append((interp(x), x % L))
    top = max(c[0] for c in cands)
    ties = [x for val, x in cands if val >= top - TIE_TOL * scale]
    if period:
        ties = [x % period for x in ties]
        ties = [0.0 if period - x < 1e-12 * L else x for x in ties]
    else:
        ties = [0.0 if L - x < 1e-12 * L else x for x in ties]
    c = min(ties)
    uxx = float(interp(c, 2))
    degenerate = abs(uxx) < DEGENERATE_TOL * scale * (2.0 * math.pi / L) ** 2
    return MaxPhase(float(c), float(interp(c)), uxx, degenerate)
