"""Pseudo-spectral integration of u_t = u_xx + g(t, u, u_x).

Circle problems use real FFTs.  Interval problems are solved two ways: by
reflecting onto a circle of twice the length (``extend_even`` /
``extend_odd``) and directly with cosine (Neumann) or sine (Dirichlet)
collocation.  Both paths share the time scheme: the diffusion propagator is
applied exactly in transform space and the nonlinearity is treated with the
second-order exponential time-differencing Runge-Kutta method (ETD2RK).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

from .forcing import BasePoint, ForcingConfigError, ForcingField, evaluate, translate

DOMAINS = ("circle", "neumann", "dirichlet")
BLOWUP_THRESHOLD = 1e8
TAIL_FRACTION = 1.0 / 8.0
TAIL_ENERGY_LIMIT = 1e-8
TAIL_CHECK_AFTER = 0.01


class BlowUpError(RuntimeError):
    """Nonfinite or huge values; carries the last finite snapshot."""

    def __init__(self, message, time, last_snapshot=None):
        super().__init__(message)
        self.time = time
        self.last_snapshot = last_snapshot


class ResolutionError(RuntimeError):
    """Spectral tail carries too much energy for the grid."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Profile sampled on a uniform grid.

    Circle grids hold n nodes x_j = j L / n.  Interval grids hold n = N + 1
    nodes x_j = j L / N including both endpoints, with N a power of two so the
    reflected profile lives on a 2N-point circle grid.
    """

    values: np.ndarray
    domain: str
    L: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("GridFunction values must be one-dimensional")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "L", float(self.L))
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if not self.L > 0:
            raise ValueError("L must be positive")
        n = vals.size
        if self.domain == "circle":
            if n < 16 or not _is_pow2(n):
                raise ValueError(f"circle grids need a power-of-two n >= 16, got {n}")
        else:
            if n < 17 or not _is_pow2(n - 1):
                raise ValueError(f"interval grids need n = 2^m + 1 >= 17 nodes, got {n}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFunction values must be finite")
        if self.domain == "dirichlet" and max(abs(vals[0]), abs(vals[-1])) > 1e-12:
            raise ValueError("Dirichlet profile must vanish at both endpoints")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        if self.domain == "circle":
            return np.arange(self.n) * (self.L / self.n)
        return np.arange(self.n) * (self.L / (self.n - 1))

    @property
    def h(self) -> float:
        return self.L / self.n if self.domain == "circle" else self.L / (self.n - 1)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(values, self.domain, self.L)

    @classmethod
    def from_function(cls, func, n: int, L: float, domain: str = "circle") -> "GridFunction":
        if domain == "circle":
            x = np.arange(n) * (L / n)
        else:
            x = np.arange(n) * (L / (n - 1))
        vals = np.asarray(func(x), dtype=float) * np.ones_like(x)
        if domain == "dirichlet":
            vals[0] = vals[-1] = 0.0
        return cls(vals, domain, L)


@dataclass(frozen=True, eq=False)
class OrbitSnapshot:
    """A point (phi(t), g.t) of the skew-product orbit."""

    profile: GridFunction
    base: BasePoint
    t: float


# ---------------------------------------------------------------------------
# spectral helpers on the circle

def wavenumbers(n: int, L: float) -> np.ndarray:
    return (2.0 * math.pi / L) * np.arange(n // 2 + 1)


def derivative_multiplier(n: int, L: float, order: int) -> np.ndarray:
    mult = (1j * wavenumbers(n, L)) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[-1] = 0.0
    return mult


def _circle_derivative(values: np.ndarray, L: float, order: int) -> np.ndarray:
    n = values.shape[-1]
    return np.fft.irfft(np.fft.rfft(values, axis=-1) * derivative_multiplier(n, L, order),
                        n=n, axis=-1)


class TrigInterpolant:
    """Band-limited interpolant of circle samples, evaluable anywhere."""

    def __init__(self, values, L: float):
        values = np.asarray(values, dtype=float)
        self.n = values.size
        self.L = float(L)
        c = np.fft.rfft(values) / self.n
        w = np.full(c.shape, 2.0)
        w[0] = 1.0
        if self.n % 2 == 0:
            w[-1] = 1.0
            c[-1] = c[-1].real
        self.coef = c * w
        self.k = wavenumbers(self.n, self.L)

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        phase = np.exp(1j * np.multiply.outer(x, self.k))
        out = (phase * (self.coef * (1j * self.k) ** order)).real.sum(axis=-1)
        return out if out.ndim else float(out)


def spatial_derivatives(u: GridFunction, order: int) -> GridFunction:
    """Spectral derivative of order 1..3.

    Interval profiles are differentiated through their reflected extension;
    odd orders swap the Neumann/Dirichlet tag since the derivative of an even
    extension is odd and vice versa.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")
    if u.domain == "circle":
        return u.with_values(_circle_derivative(u.values, u.L, order))
    ext = extend_even(u) if u.domain == "neumann" else extend_odd(u)
    d = _circle_derivative(ext.values, ext.L, order)[: u.n].copy()
    tag = u.domain
    if order % 2 == 1:
        tag = "dirichlet" if u.domain == "neumann" else "neumann"
    if tag == "dirichlet":
        d[0] = d[-1] = 0.0
    return GridFunction(d, tag, u.L)


# ---------------------------------------------------------------------------
# time scheme

def _phi_functions(z: np.ndarray):
    """phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, stable near 0."""
    z = np.asarray(z, dtype=float)
    phi1 = np.empty_like(z)
    phi2 = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    s1 = np.zeros_like(zs)
    s2 = np.zeros_like(zs)
    term = np.ones_like(zs)
    fact1, fact2 = 1.0, 2.0
    for j in range(20):
        s1 += term / fact1
        s2 += term / fact2
        term = term * zs
        fact1 *= j + 2
        fact2 *= j + 3
    phi1[small] = s1
    phi2[small] = s2
    zl = z[~small]
    phi1[~small] = np.expm1(zl) / zl
    phi2[~small] = (np.expm1(zl) - zl) / zl ** 2
    return phi1, phi2


def default_dt(L: float) -> float:
    return 1e-3 * (L / (2.0 * math.pi)) ** 2


class _Scheme:
    """ETD2RK over a diagonal diffusion operator; subclasses supply transforms."""

    def __init__(self, lam: np.ndarray, dt: float, field: ForcingField, base0: BasePoint, mask):
        self.dt = dt
        self.field = field
        self.base0 = base0
        z = lam * dt
        self.E = np.exp(z)
        phi1, phi2 = _phi_functions(z)
        self.c1 = dt * phi1
        self.c2 = dt * phi2
        self.mask = mask
        self.null_field = not field.terms

    def nonlinear(self, coef, s):
        if self.null_field:
            return np.zeros_like(coef)
        u, ux = self.values_and_slope(coef)
        umax = np.max(np.abs(u)) if u.size else 0.0
        if not np.isfinite(umax) or umax > BLOWUP_THRESHOLD:
            raise FloatingPointError(s)
        f = evaluate(self.field, self.base0, s, u, ux)
        return self.forward_nonlinear(f) * self.mask

    def step(self, coef, s):
        n0 = self.nonlinear(coef, s)
        a = self.E * coef + self.c1 * n0
        if self.null_field:
            return a
        n1 = self.nonlinear(a, s + self.dt)
        return a + self.c2 * (n1 - n0)

    def tail_fraction(self, coef) -> float:
        energy = np.abs(coef) ** 2
        m = energy.shape[-1]
        start = int(math.ceil(m * (1.0 - TAIL_FRACTION)))
        total = energy.sum(axis=-1)
        tail = energy[..., start:].sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(total > 0, tail / np.where(total > 0, total, 1.0), 0.0)
        return float(np.max(frac))


class _CircleScheme(_Scheme):
    def __init__(self, n, L, dt, field, base0):
        k = wavenumbers(n, L)
        self.n = n
        self.ik = derivative_multiplier(n, L, 1)
        mask = (np.arange(n // 2 + 1) <= n // 3).astype(float)
        super().__init__(-k ** 2, dt, field, base0, mask)

    def forward(self, values):
        return np.fft.rfft(values, axis=-1)

    def inverse(self, coef):
        return np.fft.irfft(coef, n=self.n, axis=-1)

    def values_and_slope(self, coef):
        return self.inverse(coef), np.fft.irfft(self.ik * coef, n=self.n, axis=-1)

    forward_nonlinear = forward


class _NeumannScheme(_Scheme):
    """Cosine collocation on N + 1 nodes (DCT-I)."""

    def __init__(self, n, L, dt, field, base0):
        self.N = n - 1
        self.kappa = math.pi / L * np.arange(self.N + 1)
        mask = (np.arange(self.N + 1) <= (2 * self.N) // 3).astype(float)
        super().__init__(-self.kappa ** 2, dt, field, base0, mask)

    def forward(self, values):
        return sfft.dct(values, type=1, axis=-1)

    def inverse(self, coef):
        return sfft.idct(coef, type=1, axis=-1)

    def values_and_slope(self, coef):
        u = self.inverse(coef)
        ux = np.zeros_like(u)
        ux[..., 1:-1] = sfft.idst(-coef[..., 1:-1] * self.kappa[1:-1], type=1, axis=-1)
        return u, ux

    forward_nonlinear = forward


class _DirichletScheme(_Scheme):
    """Sine collocation on the N - 1 interior nodes (DST-I)."""

    def __init__(self, n, L, dt, field, base0):
        self.N = n - 1
        self.kappa = math.pi / L * np.arange(1, self.N)
        mask = (np.arange(1, self.N) <= (2 * self.N) // 3).astype(float)
        super().__init__(-self.kappa ** 2, dt, field, base0, mask)

    def forward(self, values):
        return sfft.dst(values[..., 1:-1], type=1, axis=-1)

    def inverse(self, coef):
        inner = sfft.idst(coef, type=1, axis=-1)
        out = np.zeros(inner.shape[:-1] + (inner.shape[-1] + 2,))
        out[..., 1:-1] = inner
        return out

    def values_and_slope(self, coef):
        full = np.zeros(coef.shape[:-1] + (self.N + 1,))
        full[..., 1:-1] = coef * self.kappa
        return self.inverse(coef), sfft.idct(full, type=1, axis=-1)

    def forward_nonlinear(self, f):
        return sfft.dst(f[..., 1:-1], type=1, axis=-1)


_SCHEMES = {"circle": _CircleScheme, "neumann": _NeumannScheme, "dirichlet": _DirichletScheme}


def _step_count(t_end: float, dt: float) -> tuple[int, float]:
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    return steps, t_end / steps


def run_batch(values0, domain: str, L: float, base: BasePoint, field: ForcingField,
              t_end: float, dt: float, capture: Iterable[int] | None = None,
              sample_every: int | None = None, t0: float = 0.0,
              check_resolution: bool = True):
    """Integrate one or more profiles (rows of ``values0``) over a shared base.

    Returns ``(times, profiles)`` where ``profiles`` has shape
    ``(n_captures, batch, n)``.  Captured steps are either every
    ``sample_every`` steps (initial and final step included) or the explicit
    step indices in ``capture``.  Time labels are ``t0 + i * h`` with
    ``h = t_end / ceil(t_end / dt)``.
    """
    values0 = np.atleast_2d(np.asarray(values0, dtype=float))
    n = values0.shape[-1]
    steps, h = _step_count(t_end, dt)
    if capture is None:
        every = int(sample_every or 1)
        if every < 1:
            raise ValueError("sample_every must be >= 1")
        wanted = set(range(0, steps + 1, every))
        wanted.add(steps)
    else:
        wanted = {int(i) for i in capture if 0 <= int(i) <= steps}
    scheme = _SCHEMES[domain](n, L, h, field, base)
    coef = scheme.forward(values0)
    times, frames = [], []
    last_good = (0, values0.copy())
    if 0 in wanted:
        times.append(t0)
        frames.append(values0.copy())
    for i in range(1, steps + 1):
        s = (i - 1) * h
        try:
            with np.errstate(over="raise", invalid="raise"):
                coef = scheme.step(coef, s)
        except FloatingPointError:
            coef = None
        if coef is None or i in wanted or i % 64 == 0:
            vals = scheme.inverse(coef) if coef is not None else None
            if vals is None or not np.all(np.isfinite(vals)) \
                    or np.max(np.abs(vals)) > BLOWUP_THRESHOLD:
                i_good, v_good = last_good
                last = OrbitSnapshot(GridFunction(v_good[0], domain, L),
                                     translate(base, i_good * h, field.omega), t0 + i_good * h)
                raise BlowUpError(f"solution blew up near t = {t0 + i * h:.6g}",
                                  time=t0 + i * h, last_snapshot=last)
            last_good = (i, vals)
            if i in wanted:
                if check_resolution and i * h >= TAIL_CHECK_AFTER:
                    frac = scheme.tail_fraction(coef)
                    if frac > TAIL_ENERGY_LIMIT:
                        raise ResolutionError(
                            f"top 1/8 of modes carry {frac:.3g} of the energy at "
                            f"t = {t0 + i * h:.6g}; increase n")
                times.append(t0 + i * h)
                frames.append(vals)
    return np.asarray(times), np.asarray(frames)


def _snapshots(times, frames, domain, L, base, field, t0, row=0):
    out = []
    for t, vals in zip(times, frames):
        out.append(OrbitSnapshot(GridFunction(vals[row], domain, L),
                                 translate(base, t - t0, field.omega), float(t)))
    return out


def integrate(u0: GridFunction, base: BasePoint, field: ForcingField, t_end: float,
              dt: float | None = None, sample_every: int = 1, t0: float = 0.0,
              check_resolution: bool = True) -> list[OrbitSnapshot]:
    """Skew-product orbit from (u0, base): snapshots every ``sample_every`` steps.

    ``t0`` only labels time; the hull element at the start is ``base``.
    """
    if dt is None:
        dt = default_dt(u0.L)
    if base.k != field.k:
        raise ValueError("base and forcing field disagree on torus dimension")
    times, frames = run_batch(u0.values, u0.domain, u0.L, base, field, t_end, dt,
                              sample_every=sample_every, t0=t0,
                              check_resolution=check_resolution)
    return _snapshots(times, frames, u0.domain, u0.L, base, field, t0)


def step(snap: OrbitSnapshot, field: ForcingField, dt: float) -> OrbitSnapshot:
    """Advance one ETD2RK step of size dt."""
    snaps = integrate(snap.profile, snap.base, field, dt, dt, sample_every=1, t0=snap.t,
                      check_resolution=False)
    return snaps[-1]


def solve_interval(u0: GridFunction, base: BasePoint, field: ForcingField, bc: str,
                   t_end: float, dt: float | None = None, sample_every: int = 1
                   ) -> list[OrbitSnapshot]:
    """Direct Neumann (cosine) or Dirichlet (sine) collocation solve."""
    if bc not in ("neumann", "dirichlet"):
        raise ValueError(f"bc must be 'neumann' or 'dirichlet', got {bc!r}")
    if u0.domain != bc:
        u0 = GridFunction(u0.values, bc, u0.L)
    return integrate(u0, base, field, t_end, dt, sample_every)


# ---------------------------------------------------------------------------
# reflections between [0, L] and the circle of length 2L

def extend_even(u0: GridFunction) -> GridFunction:
    if u0.domain != "neumann":
        raise ValueError("extend_even expects a Neumann interval profile")
    v = u0.values
    return GridFunction(np.concatenate([v, v[-2:0:-1]]), "circle", 2.0 * u0.L)


def extend_odd(u0: GridFunction) -> GridFunction:
    v = u0.values
    if max(abs(v[0]), abs(v[-1])) > 1e-10:
        raise ValueError("extend_odd needs a profile vanishing at both endpoints")
    if u0.domain not in ("dirichlet", "neumann"):
        raise ValueError("extend_odd expects an interval profile")
    w = v.copy()
    w[0] = w[-1] = 0.0
    return GridFunction(np.concatenate([w, -w[-2:0:-1]]), "circle", 2.0 * u0.L)


def restrict(u: GridFunction, bc: str = "neumann") -> GridFunction:
    """The [0, L] half of a profile on the circle of length 2L."""
    if u.domain != "circle":
        raise ValueError("restrict expects a circle profile")
    half = u.values[: u.n // 2 + 1].copy()
    if bc == "dirichlet" and max(abs(half[0]), abs(half[-1])) <= 1e-10:
        half[0] = half[-1] = 0.0
    return GridFunction(half, bc, u.L / 2.0)


def require_reflection_symmetry(field: ForcingField, bc: str) -> None:
    if not field.even_in_p:
        raise ForcingConfigError(f"{bc} extension needs a field declared even in u_x")
    if bc == "dirichlet" and not field.odd_in_u:
        raise ForcingConfigError("dirichlet extension needs a field declared odd in u")


def solve_by_extension(u0: GridFunction, base: BasePoint, field: ForcingField,
                       t_end: float, dt: float | None = None, sample_every: int = 1
                       ) -> list[OrbitSnapshot]:
    """extend -> periodic solve on length 2L -> restrict.

    The reflected data stay reflected only when the field is even in u_x
    (Neumann) and, for Dirichlet, also odd in u; both flags are required.
    """
    require_reflection_symmetry(field, u0.domain)
    ext = extend_even(u0) if u0.domain == "neumann" else extend_odd(u0)
    snaps = integrate(ext, base, field, t_end, dt, sample_every)
    return [OrbitSnapshot(restrict(s.profile, u0.domain), s.base, s.t) for s in snaps]


# ---------------------------------------------------------------------------
# snapshot dumps

def write_snapshots_csv(path, snapshots: Sequence[OrbitSnapshot]) -> None:
    """CSV with header ``t,theta_1..theta_k,x_0..x_{n-1}``."""
    if not snapshots:
        raise ValueError("no snapshots to write")
    k = snapshots[0].base.k
    n = snapshots[0].profile.n
    header = ["t"] + [f"theta_{i + 1}" for i in range(k)] + [f"x_{j}" for j in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in snapshots:
            w.writerow([repr(float(s.t))] + [repr(v) for v in s.base.theta]
                       + [repr(float(v)) for v in s.profile.values])


def write_snapshots_binary(path, snapshots: Sequence[OrbitSnapshot]) -> None:
    """Little-endian float64 dump.

    Layout: int64 header ``[count, k, n]`` then, per snapshot, ``t``,
    ``theta_1..theta_k`` and the n profile values.
    """
    k = snapshots[0].base.k
    n = snapshots[0].profile.n
    rows = np.array([[s.t, *s.base.theta, *s.profile.values] for s in snapshots], dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(np.array([len(snapshots), k, n], dtype="<i8").tobytes())
        fh.write(rows.tobytes())


def read_snapshots_binary(path, domain: str, L: float) -> list[OrbitSnapshot]:
    raw = open(path, "rb").read()
    count, k, n = np.frombuffer(raw[:24], dtype="<i8")
    rows = np.frombuffer(raw[24:], dtype="<f8").reshape(int(count), 1 + int(k) + int(n))
    return [OrbitSnapshot(GridFunction(r[1 + k:], domain, L), BasePoint(tuple(r[1:1 + k])),
                          float(r[0])) for r in rows]
