"""Phase of the profile maximum with its reduced circle flow c' = G, plus the evaluation map.

Along an orbit the profile is written as phi(t, x) = u(x + c(t)) with u
normalized to peak at x = 0, so c(t) is minus the location of the maximum.
Differentiating phi_x(t, -c(t)) = 0 in time gives

    c'(t) = G = f_p(t, u_max, 0) + u'''(x*) / u''(x*).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .forcing import ForcingField, eval_partials, hull_distance
from .group_action import max_phase, smallest_period
from .pde_core import GridFunction, OrbitSnapshot, TrigInterpolant

# a reduced step beyond this fraction of L0 cannot be unwrapped reliably
LIFT_AMBIGUITY = 0.4


class DegenerateMaximumError(ValueError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class LiftAmbiguityError(ValueError):
    pass


@dataclass
class PhaseTrack:
    times: np.ndarray
    c_lifted: np.ndarray
    L0: float
    degenerate_flags: np.ndarray

    @property
    def c_mod(self) -> np.ndarray:
        return np.mod(self.c_lifted, self.L0)


def _snapshot_list(sample) -> list[OrbitSnapshot]:
    return list(getattr(sample, "snapshots", sample))


def track_phase(snapshots: Sequence[OrbitSnapshot], L0: float | None = None) -> PhaseTrack:
    """Continuous lift of c(t) = -argmax phi(t, .), unwrapped modulo L0."""
    snaps = _snapshot_list(snapshots)
    if not snaps:
        raise ValueError("no snapshots")
    if L0 is None:
        per = smallest_period(snaps[0].profile)
        if per.homogeneous:
            raise ValueError(f"snapshot at t = {snaps[0].t} is spatially homogeneous")
        L0 = per.L0
    times, raw, flags = [], [], []
    for s in snaps:
        mp = max_phase(s.profile, period=L0)
        times.append(s.t)
        raw.append(-mp.c)
        flags.append(mp.degenerate)
    raw = np.asarray(raw)
    lifted = np.empty_like(raw)
    lifted[0] = raw[0]
    for i in range(1, raw.size):
        d = raw[i] - raw[i - 1]
        d -= L0 * np.round(d / L0)
        if abs(d) > LIFT_AMBIGUITY * L0:
            raise LiftAmbiguityError(
                f"phase moved {d:.4g} (L0 = {L0:.4g}) between t = {times[i - 1]:.6g} and "
                f"t = {times[i]:.6g}; reduce sample_every")
        lifted[i] = lifted[i - 1] + d
    return PhaseTrack(np.asarray(times), lifted, float(L0), np.asarray(flags, dtype=bool))


def compute_G(snap: OrbitSnapshot, field: ForcingField) -> float:
    """G = f_p(t, u(x*), 0) + u'''(x*) / u''(x*) at the maximum x* of the snapshot."""
    u = snap.profile
    mp = max_phase(u)
    if mp.degenerate:
        raise DegenerateMaximumError(
            f"u'' = {mp.second_deriv:.3g} at the maximum is below threshold", snap.t)
    interp = TrigInterpolant(u.values, u.L)
    u3 = interp(mp.c, 3)
    # the snapshot base is already the hull element at time t
    _, fp = eval_partials(field, snap.base, 0.0, mp.max_value, 0.0)
    return float(fp + u3 / mp.second_deriv)


@dataclass
class ReductionCheck:
    times: np.ndarray
    c_lifted: np.ndarray
    G: np.ndarray
    residual: np.ndarray  # NaN at the two ends, where no central difference exists

    @property
    def max_residual(self) -> float:
        return float(np.nanmax(self.residual))


def verify_reduction(snapshots: Sequence[OrbitSnapshot], field: ForcingField,
                     L0: float | None = None) -> ReductionCheck:
    """Compare central differences of the lifted phase with G at the same times."""
    snaps = _snapshot_list(snapshots)
    if len(snaps) < 3:
        raise ValueError("need at least three snapshots for central differences")
    track = track_phase(snaps, L0)
    if track.degenerate_flags.any():
        t_bad = track.times[int(np.argmax(track.degenerate_flags))]
        raise DegenerateMaximumError(f"degenerate maximum at t = {t_bad:.6g}", t_bad)
    G = np.array([compute_G(s, field) for s in snaps])
    t, c = track.times, track.c_lifted
    cdot = np.full(t.size, np.nan)
    cdot[1:-1] = (c[2:] - c[:-2]) / (t[2:] - t[:-2])
    return ReductionCheck(t, c, G, np.abs(cdot - G))


def write_residuals(path, check: ReductionCheck) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "c_lifted", "G", "residual"])
        for row in zip(check.times, check.c_lifted, check.G, check.residual):
            w.writerow([repr(float(v)) if not math.isnan(v) else "" for v in row])


# ---------------------------------------------------------------------------
# symmetric case: common critical point and the evaluation map

def _fine_slopes(profiles: Sequence[GridFunction], factor: int) -> tuple[np.ndarray, np.ndarray]:
    """|u_x| on a grid ``factor`` times finer, by zero-padded spectral interpolation."""
    n, L = profiles[0].n, profiles[0].L
    m = n * factor
    k = (2.0 * math.pi / L) * np.arange(n // 2 + 1)
    coef = np.fft.rfft(np.vstack([p.values for p in profiles]), axis=1) * (1j * k)
    coef[:, -1] = 0.0
    padded = np.zeros((len(profiles), m // 2 + 1), dtype=complex)
    padded[:, : n // 2 + 1] = coef
    return np.arange(m) * (L / m), np.abs(np.fft.irfft(padded, m, axis=1) * factor)


def find_common_critical_point(sample, factor: int = 16) -> tuple[float, float]:
    """x0 minimizing max over snapshots of |u_x(x0)|, and that maximum.

    The fine-grid minimizer (ties within 1e-10 of the scale broken toward
    the smallest x) is polished by a bounded local search.
    """
    snaps = _snapshot_list(sample)
    if not snaps:
        raise ValueError("empty sample")
    profiles = [s.profile for s in snaps]
    L = profiles[0].L
    scale = max(float(np.max(np.abs(p.values))) for p in profiles) * (2.0 * math.pi / L)
    x, slopes = _fine_slopes(profiles, factor)
    worst = slopes.max(axis=0)
    j = int(np.nonzero(worst <= worst.min() + 1e-10 * max(scale, 1e-300))[0][0])
    x0, res = float(x[j]), float(worst[j])
    if res > 1e-14 * scale:
        interps = [TrigInterpolant(p.values, L) for p in profiles]

        def objective(s):
            return max(abs(f(s, 1)) for f in interps)

        dx = x[1] - x[0]
        opt = minimize_scalar(objective, bounds=(x0 - dx, x0 + dx), method="bounded",
                              options={"xatol": 1e-13 * L})
        if opt.fun < res:
            x0, res = float(opt.x) % L, float(opt.fun)
    return x0, res


@dataclass
class ConjugacyReport:
    x0: float
    n_pairs: int
    mu: float  # min separation ratio; +inf when no distinct same-fiber pair exists
    violations: list[tuple[int, int, float, float]] = dc_field(default_factory=list)

    @property
    def injective(self) -> bool:
        return not self.violations


def evaluation_conjugacy_check(sample, x0: float, base_tol: float = 1e-9,
                               same_tol: float = 1e-8, sep_tol: float = 1e-8) -> ConjugacyReport:
    """Injectivity of u -> u(x0) on each fiber of the sample.

    Snapshots whose bases agree within ``base_tol`` share a fiber.  For each
    distinct pair (max-norm distance above ``same_tol`` times the scale) the
    ratio |u(x0) - v(x0)| / ||u - v|| is recorded; pairs whose values at x0
    agree within ``sep_tol`` times the scale are violations.
    """
    snaps = _snapshot_list(sample)
    scale = max(float(np.max(np.abs(s.profile.values))) for s in snaps) if snaps else 1.0
    vals = [float(TrigInterpolant(s.profile.values, s.profile.L)(x0)) for s in snaps]
    mu, n_pairs, violations = math.inf, 0, []
    for i in range(len(snaps)):
        for j in range(i + 1, len(snaps)):
            if hull_distance(snaps[i].base, snaps[j].base) > base_tol:
                continue
            dist = float(np.max(np.abs(snaps[i].profile.values - snaps[j].profile.values)))
            if dist <= same_tol * scale:
                continue
            n_pairs += 1
            sep = abs(vals[i] - vals[j])
            mu = min(mu, sep / dist)
            if sep <= sep_tol * scale:
                violations.append((i, j, sep, dist))
    return ConjugacyReport(float(x0), n_pairs, mu, violations)
