"""Quasi-periodic forcing fields f(t, u, p) on a k-torus phase.

A field is a finite table of terms ``coeff * T(2*pi*m.theta) * phi(u, p)`` where
``T`` is cos or sin and ``phi`` is drawn from a closed family of (u, p)
factors.  For finitely many frequencies the hull of f is a torus, so a point
theta of that torus identifies a hull element g, and the base flow is
``theta -> theta + omega * t (mod 1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# name -> (even_in_u, odd_in_u, even_in_p, vanishes_at_u0)
FACTORS: dict[str, tuple[bool, bool, bool, bool]] = {
    "1": (True, False, True, False),
    "u": (False, True, True, True),
    "u2": (True, False, True, True),
    "u3": (False, True, True, True),
    "p": (True, False, False, False),
    "p2": (True, False, True, False),
    "up": (False, True, False, True),
    "sin": (False, True, True, True),
    "cos": (True, False, True, False),
}

RATIONAL_DENOMINATOR_BOUND = 1000
RATIONAL_TOLERANCE = 1e-9


class ForcingConfigError(ValueError):
    """Invalid forcing specification."""


@dataclass(frozen=True)
class Term:
    coeff: float
    mode: tuple[int, ...]
    trig: str = "cos"
    factor: str = "1"
    beta: float = 1.0

    def __post_init__(self):
        if self.trig not in ("cos", "sin"):
            raise ForcingConfigError(f"trig must be 'cos' or 'sin', got {self.trig!r}")
        if self.factor not in FACTORS:
            raise ForcingConfigError(
                f"unknown factor {self.factor!r}; expected one of {sorted(FACTORS)}")
        object.__setattr__(self, "mode", tuple(int(m) for m in self.mode))
        object.__setattr__(self, "coeff", float(self.coeff))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class BasePoint:
    """Torus phase identifying one element of the hull."""

    theta: tuple[float, ...]

    def __post_init__(self):
        th = np.mod(np.asarray(self.theta, dtype=float).ravel(), 1.0)
        # np.mod can return exactly 1.0 for tiny negative inputs
        th[th >= 1.0] = 0.0
        object.__setattr__(self, "theta", tuple(float(v) for v in th))

    @property
    def k(self) -> int:
        return len(self.theta)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.theta, dtype=float)

    @classmethod
    def zeros(cls, k: int) -> "BasePoint":
        return cls((0.0,) * k)


@dataclass(frozen=True)
class ForcingField:
    frequencies: tuple[float, ...]
    terms: tuple[Term, ...] = ()
    even_in_p: bool = False
    odd_in_u: bool = False
    zero_at_u0: bool = False
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        freqs = tuple(float(w) for w in self.frequencies)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "terms", tuple(self.terms))
        k = len(freqs)
        if k < 1:
            raise ForcingConfigError("at least one frequency is required")
        if any(w == 0.0 or not math.isfinite(w) for w in freqs):
            raise ForcingConfigError("frequencies must be finite and nonzero")
        for term in self.terms:
            if len(term.mode) != k:
                raise ForcingConfigError(
                    f"term mode {term.mode} has length {len(term.mode)}, expected {k}")
            even_u, odd_u, even_p, zero_u0 = FACTORS[term.factor]
            if self.even_in_p and not even_p:
                raise ForcingConfigError(f"factor {term.factor!r} is odd in p; even_in_p is set")
            if self.odd_in_u and not odd_u:
                raise ForcingConfigError(f"factor {term.factor!r} is not odd in u; odd_in_u is set")
            if self.zero_at_u0 and not zero_u0:
                raise ForcingConfigError(
                    f"factor {term.factor!r} does not vanish at u=0; zero_at_u0 is set")
        notes = rational_dependence_warnings(freqs)
        for note in notes:
            warnings.warn(note, RuntimeWarning, stacklevel=3)
        object.__setattr__(self, "warnings", tuple(notes))
        # cached arrays for vectorized evaluation
        modes = np.array([t.mode for t in self.terms], dtype=float).reshape(len(self.terms), k)
        object.__setattr__(self, "_modes", modes)
        object.__setattr__(self, "_omega", np.asarray(freqs))

    @property
    def k(self) -> int:
        return len(self.frequencies)

    @property
    def omega(self) -> np.ndarray:
        return self._omega

    def phase(self, base: BasePoint, t: float) -> np.ndarray:
        """Torus phase theta + omega t, reduced mod 1."""
        return np.mod(base.as_array() + self._omega * t, 1.0)

    def torus_factors(self, base: BasePoint, t: float) -> np.ndarray:
        """Values of cos/sin(2 pi m.theta) for each term at the given time."""
        if not self.terms:
            return np.zeros(0)
        arg = TWO_PI * (self._modes @ self.phase(base, t))
        out = np.empty(len(self.terms))
        for i, term in enumerate(self.terms):
            out[i] = math.cos(arg[i]) if term.trig == "cos" else math.sin(arg[i])
        return out

    def to_dict(self) -> dict:
        return {
            "frequencies": list(self.frequencies),
            "terms": [
                {"coeff": t.coeff, "mode": list(t.mode), "trig": t.trig,
                 "factor": t.factor, "beta": t.beta}
                for t in self.terms
            ],
            "symmetry": {"even_in_p": self.even_in_p, "odd_in_u": self.odd_in_u,
                         "zero_at_u0": self.zero_at_u0},
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "ForcingField":
        try:
            freqs = spec["frequencies"]
            terms = [Term(coeff=t["coeff"], mode=tuple(t["mode"]), trig=t.get("trig", "cos"),
                          factor=t.get("factor", "1"), beta=t.get("beta", 1.0))
                     for t in spec.get("terms", [])]
        except (KeyError, TypeError) as exc:
            raise ForcingConfigError(f"malformed forcing spec: {exc}") from exc
        sym = spec.get("symmetry", {})
        unknown = set(sym) - {"even_in_p", "odd_in_u", "zero_at_u0"}
        if unknown:
            raise ForcingConfigError(f"unknown symmetry flags {sorted(unknown)}")
        return cls(frequencies=tuple(freqs), terms=tuple(terms),
                   even_in_p=bool(sym.get("even_in_p", False)),
                   odd_in_u=bool(sym.get("odd_in_u", False)),
                   zero_at_u0=bool(sym.get("zero_at_u0", False)))


def rational_dependence_warnings(freqs: Sequence[float]) -> list[str]:
    """Flag frequency ratios that sit within tolerance of a small-denominator rational."""
    notes = []
    for i in range(len(freqs)):
        for j in range(i + 1, len(freqs)):
            ratio = freqs[j] / freqs[i]
            approx = Fraction(ratio).limit_denominator(RATIONAL_DENOMINATOR_BOUND)
            if abs(ratio - float(approx)) < RATIONAL_TOLERANCE:
                notes.append(
                    f"frequencies {i} and {j} look rationally dependent "
                    f"(ratio {ratio!r} ~ {approx})")
    return notes


def _factor_values(term: Term, u, p):
    f = term.factor
    if f == "1":
        return np.ones_like(u)
    if f == "u":
        return u
    if f == "u2":
        return u * u
    if f == "u3":
        return u * u * u
    if f == "p":
        return p
    if f == "p2":
        return p * p
    if f == "up":
        return u * p
    if f == "sin":
        return np.sin(term.beta * u)
    return np.cos(term.beta * u)


def _factor_partials(term: Term, u, p):
    f = term.factor
    zero = np.zeros_like(u)
    if f == "1":
        return zero, zero
    if f == "u":
        return np.ones_like(u), zero
    if f == "u2":
        return 2.0 * u, zero
    if f == "u3":
        return 3.0 * u * u, zero
    if f == "p":
        return zero, np.ones_like(u)
    if f == "p2":
        return zero, 2.0 * p
    if f == "up":
        return p, u
    if f == "sin":
        return term.beta * np.cos(term.beta * u), zero
    return -term.beta * np.sin(term.beta * u), zero


def evaluate(field: ForcingField, base: BasePoint, t: float, u, p):
    """g(t, u, p) for the hull element g identified by ``base``.

    ``u`` and ``p`` may be scalars or arrays of a common shape.
    """
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    u, p = np.broadcast_arrays(u, p)
    out = np.zeros(u.shape)
    for term, tf in zip(field.terms, field.torus_factors(base, t)):
        c = term.coeff * tf
        if c != 0.0:
            out = out + c * _factor_values(term, u, p)
    return out if out.ndim else float(out)


def eval_partials(field: ForcingField, base: BasePoint, t: float, u, p):
    """Exact (f_u, f_p) from the symbolic term table."""
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    u, p = np.broadcast_arrays(u, p)
    fu = np.zeros(u.shape)
    fp = np.zeros(u.shape)
    for term, tf in zip(field.terms, field.torus_factors(base, t)):
        c = term.coeff * tf
        if c != 0.0:
            du, dp = _factor_partials(term, u, p)
            fu = fu + c * du
            fp = fp + c * dp
    if fu.ndim == 0:
        return float(fu), float(fp)
    return fu, fp


def translate(base: BasePoint, tau: float, omega) -> BasePoint:
    """Base flow: theta -> theta + omega * tau (mod 1)."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (base.k,):
        raise ValueError(f"frequency vector of length {omega.size} for a {base.k}-torus base")
    return BasePoint(tuple(base.as_array() + omega * tau))


def hull_distance(b1: BasePoint, b2: BasePoint) -> float:
    """Max-over-components circle distance between two torus phases."""
    if b1.k != b2.k:
        raise ValueError(f"base dimension mismatch: {b1.k} vs {b2.k}")
    d = np.abs(b1.as_array() - b2.as_array())
    return float(np.max(np.minimum(d, 1.0 - d)))


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class AlmostPeriods:
    lags: np.ndarray
    max_gap: float
    mean_gap: float

    @property
    def relatively_dense(self) -> bool:
        return self.lags.size >= 2 and self.max_gap < 10.0 * self.mean_gap


def almost_period_scan(series, eps: float, dt: float = 1.0, max_lag_fraction: float = 0.5):
    """All grid lags tau with sup |s(t + tau) - s(t)| < eps over the overlap.

    Lags are scanned up to ``max_lag_fraction`` of the record so that every
    comparison uses an overlap of at least half the samples.  The gap
    statistics count from lag 0.
    """
    s = np.asarray(series, dtype=float).ravel()
    if s.size < 10:
        raise InsufficientDataError(f"need at least 10 samples, got {s.size}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    max_lag = int(max_lag_fraction * s.size)
    found = []
    for j in range(1, max_lag + 1):
        if np.max(np.abs(s[j:] - s[:-j])) < eps:
            found.append(j)
    lags = np.asarray(found, dtype=float) * dt
    if lags.size:
        gaps = np.diff(np.concatenate(([0.0], lags)))
        max_gap, mean_gap = float(gaps.max()), float(gaps.mean())
    else:
        max_gap = mean_gap = math.inf
    return AlmostPeriods(lags=lags, max_gap=max_gap, mean_gap=mean_gap)
