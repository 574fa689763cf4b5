"""Zero number z(u) = card{x in S^1 : u(x) = 0} and its evolution along solution differences."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .forcing import ForcingField, hull_distance
from .group_action import shift
from .pde_core import GridFunction, OrbitSnapshot, TrigInterpolant, run_batch

ZERO_NORM = 1e-12
DERIVATIVE_TOL = 1e-6


class NumericallyZeroError(ValueError):
    """The profile is indistinguishable from the zero function."""


class UnresolvedZeroError(ValueError):
    """Two roots closer than one grid cell, or a plateau at zero."""

    def __init__(self, message, location):
        super().__init__(message)
        self.location = location


@dataclass(frozen=True)
class Zero:
    location: float
    simple: bool
    residual: float


@dataclass(frozen=True)
class ZeroReport:
    count: int
    zeros: tuple[Zero, ...]
    tolerance_used: float
    unresolved: bool = False
    t: float | None = None

    @property
    def all_simple(self) -> bool:
        return not self.unresolved and all(z.simple for z in self.zeros)

    @property
    def witness(self) -> tuple[float, str] | None:
        """Location and kind of a multiple zero or cluster, if any."""
        for z in self.zeros:
            if not z.simple:
                return z.location, "cluster" if self.unresolved else "multiple"
        return None


def _circular_gap(a: float, b: float, L: float) -> float:
    d = abs(a - b) % L
    return min(d, L - d)


def zero_number(u: GridFunction, tol: float = 1e-9, strict: bool = True) -> ZeroReport:
    """Count zeros of a circle profile through its spectral interpolant.

    ``tol`` is relative to max|u|.  Sign changes between nodes are refined to
    roots of the interpolant; a zero is simple when |u_x| there exceeds
    1e-6 max|u| (2 pi / L).  Near-tangencies with no sign change are reported
    as one multiple zero.  Roots closer than one grid cell (or a run of
    nodes at zero) cannot be resolved: ``strict`` raises
    ``UnresolvedZeroError``, otherwise each cluster is merged into a single
    multiple zero and the report is marked ``unresolved``.
    """
    if u.domain != "circle":
        raise ValueError("zero_number is defined on circle profiles")
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = u.values
    n, L, h = u.n, u.L, u.h
    scale = float(np.max(np.abs(v)))
    if scale < ZERO_NORM:
        raise NumericallyZeroError(f"max|u| = {scale:.3g}; cannot count zeros of zero")
    tol_abs = tol * scale
    dtol = DERIVATIVE_TOL * scale * (2.0 * math.pi / L)
    interp = TrigInterpolant(v, L)
    ux_nodes = interp(u.x, 1)

    def f0(x):
        return interp(x)

    def f1(x):
        return interp(x, 1)

    found: list[tuple[float, bool, bool]] = []  # (location, simple, cluster)
    on_zero = np.abs(v) <= tol_abs
    if on_zero.all():
        raise NumericallyZeroError("profile lies within tolerance of zero everywhere")
    sign = np.sign(v)

    # runs of nodes at zero
    start = int(np.argmin(on_zero))  # a node off zero, so runs never wrap past it
    j = 0
    while j < n:
        idx = (start + j) % n
        if not on_zero[idx]:
            j += 1
            continue
        run = [idx]
        while on_zero[(start + j + len(run)) % n]:
            run.append((start + j + len(run)) % n)
        before = sign[(run[0] - 1) % n]
        after = sign[(run[-1] + 1) % n]
        if len(run) > 1:
            loc = (run[0] + (len(run) - 1) / 2.0) * h % L
            found.append((loc, False, True))
        else:
            x0 = run[0] * h
            if before != after:
                loc = x0
                # polish inside the two adjacent cells
                try:
                    loc = brentq(f0, x0 - h, x0 + h, xtol=1e-15) % L
                except ValueError:
                    pass
                found.append((loc, abs(f1(loc)) > dtol, False))
            elif abs(ux_nodes[run[0]]) <= dtol or abs(f1(x0)) <= dtol:
                found.append((x0, False, False))
            else:
                found.append((x0, False, True))
        j += len(run)

    # sign changes between two off-zero nodes
    nxt = np.roll(np.arange(n), -1)
    cells = np.nonzero((~on_zero) & (~on_zero[nxt]) & (sign * sign[nxt] < 0))[0]
    for c in cells:
        a = c * h
        r = brentq(f0, a, a + h, xtol=1e-15)
        found.append((r % L, abs(f1(r)) > dtol, False))

    # extrema of the interpolant between nodes that touch or cross zero
    ux_sign = np.sign(ux_nodes)
    ext_cells = np.nonzero(ux_sign * ux_sign[nxt] < 0)[0]
    for c in ext_cells:
        a = c * h
        try:
            xe = brentq(f1, a, a + h, xtol=1e-15)
        except ValueError:
            continue
        ue = f0(xe)
        node_sign = sign[c] if not on_zero[c] else sign[nxt[c]]
        if abs(ue) <= tol_abs:
            if not any(_circular_gap(xe, z[0], L) < h for z in found):
                found.append((xe % L, False, False))
        elif node_sign != 0 and np.sign(ue) != node_sign and not on_zero[c] \
                and not on_zero[nxt[c]] and sign[c] == sign[nxt[c]]:
            # interpolant dips through zero and back inside one cell
            found.append((xe % L, False, True))

    found.sort(key=lambda z: z[0])
    # merge clusters of roots closer than one cell
    merged: list[list[tuple[float, bool, bool]]] = []
    for z in found:
        if merged and z[0] - merged[-1][-1][0] < h:
            merged[-1].append(z)
        else:
            merged.append([z])
    if len(merged) > 1 and (merged[0][0][0] + L - merged[-1][-1][0]) < h:
        merged[0] = merged.pop() + merged[0]

    zeros = []
    unresolved = False
    for group in merged:
        cluster = len(group) > 1 or group[0][2]
        if cluster:
            loc = group[0][0] if len(group) == 1 else float(np.mean(
                [g[0] if g[0] >= group[0][0] - h else g[0] + L for g in group])) % L
            if strict:
                raise UnresolvedZeroError(
                    f"roots closer than one grid cell near x = {loc:.6g}; refine the grid", loc)
            unresolved = True
            zeros.append(Zero(loc, False, abs(f0(loc))))
        else:
            loc, simple, _ = group[0]
            zeros.append(Zero(loc, simple, abs(f0(loc))))
    zeros.sort(key=lambda z: z.location)
    return ZeroReport(len(zeros), tuple(zeros), tol_abs, unresolved)


def _check_pairing(orbit1: Sequence[OrbitSnapshot], orbit2: Sequence[OrbitSnapshot]):
    if len(orbit1) != len(orbit2):
        raise ValueError("orbits have different numbers of snapshots")
    for s1, s2 in zip(orbit1, orbit2):
        if abs(s1.t - s2.t) > 1e-9 * max(1.0, abs(s1.t)):
            raise ValueError(f"orbits sampled at different times ({s1.t} vs {s2.t})")
        if hull_distance(s1.base, s2.base) > 1e-9:
            raise ValueError(f"orbits over different bases at t = {s1.t}")


def difference_report(u: GridFunction, v: GridFunction, a: float = 0.0,
                      tol: float = 1e-9, t: float | None = None) -> ZeroReport:
    w = u.values - (shift(v, a).values if a else v.values)
    rep = zero_number(u.with_values(w), tol, strict=False)
    return replace(rep, t=t)


def track_difference(orbit1: Sequence[OrbitSnapshot], orbit2: Sequence[OrbitSnapshot],
                     a: float = 0.0, tol: float = 1e-9) -> list[ZeroReport]:
    """Per-time zero reports of phi1(t) - sigma_a phi2(t)."""
    _check_pairing(orbit1, orbit2)
    return [difference_report(s1.profile, s2.profile, a, tol, s1.t)
            for s1, s2 in zip(orbit1, orbit2)]


@dataclass(frozen=True)
class DropEvent:
    t_lo: float
    t_hi: float
    before: int
    after: int
    witness_x: float
    witness_kind: str  # "multiple", "cluster" or "none" (anomaly)

    @property
    def anomaly(self) -> bool:
        return self.witness_kind == "none"


def detect_drop_events(series: Sequence[ZeroReport],
                       refine: Callable[[float, float], Sequence[ZeroReport]] | None = None
                       ) -> list[DropEvent]:
    """Pair every strict decrease of the count with a multiple-zero witness.

    The bracketing reports are inspected first; if neither carries a witness
    and ``refine`` is given, the interval is re-sampled with it.  Drops left
    without a witness are returned with ``witness_kind == "none"``.
    """
    events = []
    for r0, r1 in zip(series[:-1], series[1:]):
        if r1.count >= r0.count:
            continue
        candidates = [r0, r1]
        wit = next((r.witness for r in candidates if r.witness), None)
        if wit is None and refine is not None:
            wit = next((r.witness for r in refine(r0.t, r1.t) if r.witness), None)
        if wit is None:
            events.append(DropEvent(r0.t, r1.t, r0.count, r1.count, math.nan, "none"))
        else:
            events.append(DropEvent(r0.t, r1.t, r0.count, r1.count, wit[0], wit[1]))
    return events


def difference_refiner(orbit1: Sequence[OrbitSnapshot], orbit2: Sequence[OrbitSnapshot],
                       field: ForcingField, dt: float, a: float = 0.0, factor: int = 8,
                       tol: float = 1e-9):
    """Callable re-sampling a bracket [t_lo, t_hi] at step dt / factor.

    Both orbits are re-integrated from their stored snapshots at t_lo and the
    difference is inspected at every fine step.
    """
    times = np.array([s.t for s in orbit1])

    def refine(t_lo, t_hi):
        i = int(np.argmin(np.abs(times - t_lo)))
        s1, s2 = orbit1[i], orbit2[i]
        batch = np.vstack([s1.profile.values, s2.profile.values])
        ts, frames = run_batch(batch, "circle", s1.profile.L, s1.base, field, t_hi - t_lo,
                               dt / factor, sample_every=1, t0=s1.t, check_resolution=False)
        out = []
        for t, fr in zip(ts, frames):
            u = s1.profile.with_values(fr[0])
            v = s1.profile.with_values(fr[1])
            try:
                out.append(difference_report(u, v, a, tol, float(t)))
            except NumericallyZeroError:
                continue
        return out

    return refine


@dataclass
class SturmAudit:
    """Monotonicity, drop-witness and eventual-constancy evidence for one pair."""

    counts: list[int]
    increases: list[tuple[float, float, int, int]]
    drops: list[DropEvent]
    tail_constant: bool
    tail_simple: bool

    @property
    def anomalies(self) -> list[DropEvent]:
        return [d for d in self.drops if d.anomaly]

    @property
    def ok(self) -> bool:
        return not self.increases and not self.anomalies and self.tail_constant \
            and self.tail_simple


def audit_series(series: Sequence[ZeroReport], refine=None, tail: float = 0.2) -> SturmAudit:
    increases = []
    for r0, r1 in zip(series[:-1], series[1:]):
        if r0.witness is None and r1.witness is None and r1.count > r0.count:
            increases.append((r0.t, r1.t, r0.count, r1.count))
    drops = detect_drop_events(series, refine)
    m = max(1, int(math.ceil(tail * len(series))))
    tail_reports = series[-m:]
    return SturmAudit(
        counts=[r.count for r in series],
        increases=increases,
        drops=drops,
        tail_constant=len({r.count for r in tail_reports}) == 1,
        tail_simple=all(r.all_simple for r in tail_reports),
    )


def write_drop_log(path, events: Sequence[DropEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_lo", "t_hi", "z_before", "z_after", "witness_x", "witness_kind"])
        for e in events:
            w.writerow([repr(float(e.t_lo)), repr(float(e.t_hi)), int(e.before), int(e.after),
                        repr(float(e.witness_x)), e.witness_kind])
