"""Circle ODE x' = f(t, x) on the 2-torus with its Poincare map and rotation number.

The derived quasi-periodic equation is x' = f(t, x + rho t) - rho.

f is doubly periodic: f(t + 1, x) = f(t, x + 1) = f(t, x).  It is stored as
a constant plus terms ``coeff * trig(2 pi (j t + m x))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

TWO_PI = 2.0 * math.pi
MAX_DT = 1e-3
PERIOD_TOL = 1e-9
MAX_DENOMINATOR = 100


class MonotonicityError(ValueError):
    pass


@dataclass(frozen=True)
class TorusVectorField:
    const: float = 0.0
    terms: tuple[tuple[float, int, int, str], ...] = ()  # (coeff, j, m, "cos" | "sin")

    def __post_init__(self):
        clean = []
        for coeff, j, m, trig in self.terms:
            if trig not in ("cos", "sin"):
                raise ValueError(f"trig must be 'cos' or 'sin', got {trig!r}")
            clean.append((float(coeff), int(j), int(m), trig))
        object.__setattr__(self, "terms", tuple(clean))
        object.__setattr__(self, "const", float(self.const))

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.const)
        for coeff, j, m, trig in self.terms:
            arg = TWO_PI * (j * t + m * x)
            out = out + coeff * (np.cos(arg) if trig == "cos" else np.sin(arg))
        return out

    @property
    def x_independent(self) -> bool:
        return all(m == 0 for _, _, m, _ in self.terms)

    @property
    def bound(self) -> float:
        """sup |f| over the torus (triangle-inequality bound)."""
        return abs(self.const) + sum(abs(c) for c, *_ in self.terms)

    @classmethod
    def rigid(cls, alpha: float) -> "TorusVectorField":
        return cls(alpha)

    @classmethod
    def autonomous(cls, a: float, b: float) -> "TorusVectorField":
        """a + b cos(2 pi x)."""
        return cls(a, ((b, 0, 1, "cos"),))

    @classmethod
    def arnold(cls, a: float, K: float, eps: float = 0.0) -> "TorusVectorField":
        """a + K / (2 pi) sin(2 pi x) + eps sin(2 pi t)."""
        terms = [(K / TWO_PI, 0, 1, "sin")]
        if eps:
            terms.append((eps, 1, 0, "sin"))
        return cls(a, tuple(terms))

    def to_dict(self) -> dict:
        return {"const": self.const,
                "terms": [{"coeff": c, "j": j, "m": m, "trig": tr} for c, j, m, tr in self.terms]}

    @classmethod
    def from_dict(cls, spec: dict) -> "TorusVectorField":
        return cls(spec.get("const", 0.0),
                   tuple((t["coeff"], t.get("j", 0), t.get("m", 0), t.get("trig", "cos"))
                         for t in spec.get("terms", [])))


def _rk4(rhs, x0, t0: float, t_end: float, dt: float, keep: bool):
    if not 0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}]")
    span = t_end - t0
    steps = max(1, int(math.ceil(abs(span) / dt - 1e-9)))
    h = span / steps
    x = np.array(x0, dtype=float)
    path = [x.copy()] if keep else None
    for i in range(steps):
        t = t0 + i * h
        k1 = rhs(t, x)
        k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = rhs(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if keep:
            path.append(x.copy())
    if keep:
        return t0 + h * np.arange(steps + 1), np.asarray(path)
    return x


def integrate_torus_ode(vf: TorusVectorField, eta, t_end: float, dt: float = MAX_DT,
                        t0: float = 0.0):
    """Classical RK4 for the lift x(t) with x(t0) = eta; returns (times, x).

    A negative ``t_end - t0`` integrates backward (the ODE is reversible).
    """
    return _rk4(vf, eta, t0, t_end, dt, keep=True)


def poincare_map(vf: TorusVectorField, eta, dt: float = MAX_DT):
    """psi(eta) = x(1, eta), vectorized over eta."""
    out = _rk4(vf, eta, 0.0, 1.0, dt, keep=False)
    return out if np.ndim(out) else float(out)


def check_monotone(vf: TorusVectorField, dt: float = MAX_DT, n: int = 512) -> None:
    eta = np.arange(n + 1) / n
    psi = poincare_map(vf, eta, dt)
    if np.any(np.diff(psi) <= 0.0):
        raise MonotonicityError("Poincare map lift is not increasing; reduce dt")


class PoincareTable:
    """psi(eta) = eta + D(eta mod 1) with D tabulated and periodically spline-interpolated.

    Fields without x dependence give a rigid rotation, which is kept exact.
    """

    def __init__(self, vf: TorusVectorField, n_nodes: int = 2048, dt: float = MAX_DT):
        self.vf = vf
        if vf.x_independent:
            # the time average of f over one period, exactly
            self.shift = vf.const + sum(c for c, j, _, tr in vf.terms if j == 0 and tr == "cos")
            self._spline = None
        else:
            self.shift = None
            eta = np.arange(n_nodes + 1) / n_nodes
            disp = poincare_map(vf, eta[:-1], dt) - eta[:-1]
            disp = np.append(disp, disp[0])
            self._spline = CubicSpline(eta, disp, bc_type="periodic")

    def __call__(self, x):
        if self._spline is None:
            return x + self.shift
        return x + self._spline(np.mod(x, 1.0))

    def iterate(self, eta, n: int) -> np.ndarray:
        """Lifted iterates psi^k(eta), k = 0..n (rows), vectorized over eta (columns)."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        if self._spline is None:
            return eta[None, :] + self.shift * np.arange(n + 1)[:, None]
        out = np.empty((n + 1, eta.size))
        out[0] = eta
        x = eta.copy()
        for k in range(1, n + 1):
            x = x + self._spline(np.mod(x, 1.0))
            out[k] = x
        return out


@dataclass
class RotationResult:
    rho: float
    table: list[tuple[int, float]]
    seed_spread: float
    seeds: tuple[float, ...]
    locked: tuple[int, int] | None = None  # (p, q) when every seed settles on a p/q orbit


def rotation_number(vf: TorusVectorField, eta: float = 0.0, n_iterates: int = 10_000,
                    seeds: Sequence[float] | None = None, table: PoincareTable | None = None,
                    dt: float = MAX_DT) -> RotationResult:
    """rho_n = (psi^n(eta) - eta) / n with a doubling convergence table.

    The same estimate is taken from two further seeds and the spread reported.
    When all seeds settle on periodic orbits of one type p/q the estimate is
    replaced by p/q itself, since (psi^n(eta) - eta) / n only reaches it at
    rate 1/n.
    """
    if n_iterates < 100:
        raise ValueError("n_iterates must be at least 100")
    table = table or PoincareTable(vf, dt=dt)
    seeds = tuple(seeds) if seeds is not None else (eta, eta + 1.0 / 3.0, eta + 2.0 / 3.0)
    its = table.iterate(np.asarray(seeds), n_iterates)
    rho_all = (its[-1] - its[0]) / n_iterates
    locked = None
    if vf.x_independent:
        rho_all = np.full(len(seeds), table.shift)
    else:
        found = {_detect_period(its[:, i]) for i in range(len(seeds))}
        if len(found) == 1 and None not in found:
            q, p = found.pop()
            locked = (p, q)
            # on a periodic orbit the lift advances exactly p per q iterates
            rho_all = np.full(len(seeds), p / q)
    ks = []
    k = 1
    while k < n_iterates:
        ks.append(k)
        k *= 2
    ks.append(n_iterates)
    conv = [(k, table.shift if vf.x_independent else float((its[k, 0] - its[0, 0]) / k))
            for k in ks]
    return RotationResult(float(rho_all[0]), conv, float(np.ptp(rho_all)), seeds, locked)


def rational_approximation(rho: float, tol: float = PERIOD_TOL,
                           max_den: int = MAX_DENOMINATOR) -> Fraction | None:
    approx = Fraction(rho).limit_denominator(max_den)
    return approx if abs(rho - float(approx)) < tol else None


@dataclass
class OmegaLimit:
    points: np.ndarray
    classification: str  # "dense", "gapped" or "periodic"
    gap_stats: list[tuple[int, float]]
    period: int | None = None


def largest_gap(points_mod1: np.ndarray) -> float:
    p = np.sort(np.mod(points_mod1, 1.0))
    gaps = np.diff(np.append(p, p[0] + 1.0))
    return float(gaps.max())


def _detect_period(lift: np.ndarray, tail: int = 200) -> tuple[int, int] | None:
    """Smallest q <= 100 with x_{k+q} - x_k = p (integer) on the tail, within tolerance."""
    tail_pts = lift[-(tail + MAX_DENOMINATOR):]
    for q in range(1, MAX_DENOMINATOR + 1):
        d = tail_pts[q:] - tail_pts[:-q]
        p = np.round(d[-1])
        if np.max(np.abs(d[-tail:] - p)) < PERIOD_TOL:
            return q, int(p)
    return None


def omega_limit_circle(vf: TorusVectorField, eta: float = 0.0, n_iterates: int = 10_000,
                       table: PoincareTable | None = None, dt: float = MAX_DT,
                       dense_factor: float = 2.0) -> OmegaLimit:
    """Orbit of psi mod 1 and a dense-or-gapped classification.

    Periodic orbits (x_{k+q} - x_k an integer within 1e-9 for some q <= 100 on
    the tail) are reported as such with no classification.  Otherwise the
    largest gap is measured at n/8, n/4, n/2 and n: the orbit is dense when it
    shrinks by at least ``dense_factor`` over the three doublings, gapped
    when it stabilizes.
    """
    if n_iterates < 10_000:
        raise ValueError("n_iterates must be at least 10^4")
    table = table or PoincareTable(vf, dt=dt)
    lift = table.iterate(eta, n_iterates)[:, 0]
    per = _detect_period(lift)
    if per is not None:
        q, _ = per
        pts = np.sort(np.mod(lift[-q:], 1.0))
        return OmegaLimit(pts, "periodic", [], q)
    pts = np.mod(lift[1:], 1.0)
    sizes = [n_iterates // 8, n_iterates // 4, n_iterates // 2, n_iterates]
    stats = [(m, largest_gap(pts[:m])) for m in sizes]
    shrink = stats[0][1] / stats[-1][1]
    cls = "dense" if shrink >= dense_factor else "gapped"
    return OmegaLimit(np.sort(pts), cls, stats)


class DerivedEquation:
    """x' = f(t, x + rho t) - rho; y = x + rho t solves the original ODE."""

    def __init__(self, vf: TorusVectorField, rho: float):
        self.vf = vf
        self.rho = float(rho)

    def __call__(self, t, x):
        return self.vf(t, np.asarray(x, dtype=float) + self.rho * t) - self.rho

    def integrate(self, x0, t_end: float, dt: float = MAX_DT):
        return _rk4(self, x0, 0.0, t_end, dt, keep=True)

    def monitor(self, x0: float, t_end: float, table: PoincareTable | None = None,
                dt: float = MAX_DT, direct_limit: float = 100.0):
        """sup |x(t) - x0| over [0, t_end] with a deviation table at doubling horizons.

        Short horizons are integrated directly.  Longer ones use the
        stroboscopic values x(k) = psi^k(x0) - x0 - k rho + x0 plus the
        intra-period bound sup |f - rho|.
        """
        if t_end <= direct_limit:
            t, x = self.integrate(x0, t_end, dt)
            dev = np.abs(x - x0)
            horizons = _doubling(t_end)
            rows = [(T, float(dev[t <= T + 1e-12].max())) for T in horizons]
            return MonitorResult(float(dev.max()), rows, 0.0)
        table = table or PoincareTable(self.vf, dt=dt)
        n = int(math.ceil(t_end))
        lift = table.iterate(x0, n)[:, 0]
        dev = np.abs(lift - x0 - self.rho * np.arange(n + 1))
        intra = self.vf.bound + abs(self.rho)
        rows = [(T, float(dev[: int(T) + 1].max())) for T in _doubling(t_end)]
        return MonitorResult(float(dev.max()), rows, intra)


def _doubling(t_end: float) -> list[float]:
    out, T = [], 1.0
    while T < t_end:
        out.append(T)
        T *= 2.0
    out.append(float(t_end))
    return out


@dataclass
class MonitorResult:
    sup_deviation: float  # at sampled times
    table: list[tuple[float, float]]
    intra_period_bound: float  # extra allowance between stroboscopic samples

    @property
    def bound(self) -> float:
        return self.sup_deviation + self.intra_period_bound


def derived_equation(vf: TorusVectorField, rho: float) -> DerivedEquation:
    return DerivedEquation(vf, rho)


def write_iterates(path, points: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "x_mod1"])
        for k, x in enumerate(points):
            w.writerow([k, repr(float(x))])


def write_rotation_table(path, table: Sequence[tuple[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "rho_n"])
        for n, r in table:
            w.writerow([n, repr(float(r))])
