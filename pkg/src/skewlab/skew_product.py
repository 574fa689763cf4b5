"""Omega-limit sampling at base returns and the trichotomy built on clustering modulo shifts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .forcing import BasePoint, ForcingField, hull_distance, translate
from .group_action import (_shift_values, orbit_distance, sampling_slack, shift_scan,
                           shift_upper_bound)
from .pde_core import GridFunction, OrbitSnapshot, default_dt, run_batch

MIN_RETURNS = 20
HIGH_SCORE = 0.95
DEFAULT_DELTA = 0.02
ALTERNATIVES = ("single_minimal", "minimal_plus_connecting",
                "two_minimal_plus_connecting", "inconclusive")


class InsufficientReturnsError(ValueError):
    def __init__(self, count: int, needed: int = MIN_RETURNS):
        super().__init__(f"only {count} base returns collected, need {needed}; increase t_max")
        self.count = count


# ---------------------------------------------------------------------------
# base returns

def _component_intervals(a: float, w: float, delta: float, t0: float, t1: float):
    """Open time intervals in [t0, t1] where a + w t lies within delta of an integer."""
    lo_ph, hi_ph = sorted((a + w * t0, a + w * t1))
    out = []
    for m in range(math.ceil(lo_ph - delta), math.floor(hi_ph + delta) + 1):
        s, e = sorted(((m - delta - a) / w, (m + delta - a) / w))
        s, e = max(s, t0), min(e, t1)
        if s < e:
            out.append((s, e, m))
    return out


def return_times(base: BasePoint, omega, target: BasePoint, delta: float,
                 t_start: float, t_end: float) -> np.ndarray:
    """Closest-approach times of each visit of theta + omega t to the delta-ball.

    Visits are computed exactly from the linear base flow; within a visit the
    max-norm distance is convex and piecewise linear, so its minimum sits at a
    component zero or at a crossing of two components.
    """
    omega = np.asarray(omega, dtype=float)
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 0.5)")
    a = base.as_array() - target.as_array()
    a = a - np.round(a)
    visits = [(t_start, t_end, ())]
    for i, w in enumerate(omega):
        comp = _component_intervals(a[i], w, delta, t_start, t_end)
        merged = []
        for s, e, ms in visits:
            for cs, ce, m in comp:
                lo, hi = max(s, cs), min(e, ce)
                if lo < hi:
                    merged.append((lo, hi, ms + (m,)))
        visits = merged
    out = []
    for lo, hi, ms in visits:
        ms = np.asarray(ms, dtype=float)
        cands = [lo, hi]
        for i in range(len(omega)):
            cands.append((ms[i] - a[i]) / omega[i])
            for j in range(i + 1, len(omega)):
                for sgn in (1.0, -1.0):
                    den = omega[i] - sgn * omega[j]
                    if den != 0.0:
                        cands.append((ms[i] - a[i] - sgn * (ms[j] - a[j])) / den)
        cands = np.clip(np.asarray(cands), lo, hi)
        dist = np.max(np.abs(a[None, :] + omega[None, :] * cands[:, None] - ms[None, :]), axis=1)
        out.append(float(cands[int(np.argmin(dist))]))
    return np.asarray(sorted(out))


@dataclass
class OmegaSample:
    snapshots: list[OrbitSnapshot]
    target_base: BasePoint
    transient_discard: float
    delta_base: float
    dt: float = 0.0
    t_max: float = 0.0

    def __post_init__(self):
        for s in self.snapshots:
            if s.t < self.transient_discard:
                raise ValueError("snapshot precedes the transient window")

    @property
    def amplitude(self) -> float:
        return max(float(np.max(np.abs(s.profile.values))) for s in self.snapshots)


def collect_omega_sample(u0: GridFunction, base: BasePoint, field: ForcingField, t_max: float,
                         delta_base: float = DEFAULT_DELTA,
                         transient_discard: float | None = None,
                         dt: float | None = None, target_base: BasePoint | None = None,
                         min_returns: int = MIN_RETURNS) -> OmegaSample:
    """Integrate from (u0, base) and record the profile at every base return.

    Returns are taken to ``target_base`` (default: the starting base).  The
    integrator step is adjusted per segment so that snapshots sit exactly on
    the return times.
    """
    if u0.domain != "circle":
        raise ValueError("omega-limit sampling runs on the circle")
    if transient_discard is None:
        transient_discard = 0.2 * t_max
    dt = default_dt(u0.L) if dt is None else dt
    target = base if target_base is None else target_base
    times = return_times(base, field.omega, target, delta_base, transient_discard, t_max)
    if times.size < min_returns:
        raise InsufficientReturnsError(int(times.size), min_returns)
    snaps = []
    cur, t_cur = u0.values, 0.0
    for t_next in times:
        if t_next > t_cur:
            seg_base = translate(base, t_cur, field.omega)
            _, frames = run_batch(cur, "circle", u0.L, seg_base, field, t_next - t_cur, dt,
                                  capture=[math.ceil((t_next - t_cur) / dt - 1e-9)], t0=t_cur)
            cur, t_cur = frames[-1][0], float(t_next)
        snaps.append(OrbitSnapshot(u0.with_values(cur), translate(base, t_cur, field.omega),
                                   t_cur))
    return OmegaSample(snaps, target, float(transient_discard), float(delta_base), dt, t_max)


# ---------------------------------------------------------------------------
# clustering

def _slope_bound(profiles: Sequence[GridFunction]) -> float:
    """Largest jump between neighbouring nodes; bounds the error of a grid-only shift search."""
    best = 0.0
    for p in profiles:
        best = max(best, float(np.max(np.abs(np.diff(np.append(p.values, p.values[0]))))))
    return best


def _linked(u: GridFunction, v: GridFunction, link: float | None, allowance: float) -> float:
    """Orbit distance, refined only when the grid estimate cannot settle ``d <= link``.

    The best grid rotation gives an upper bound once the sampling slack of the
    difference is added, and a lower bound once the neighbour-jump allowance
    is subtracted.  A polished shift gives a sharper upper bound before the
    full search is tried.
    """
    a, d = shift_scan(u, v)
    j = int(np.argmin(d))
    dij = float(d[j])
    if link is not None:
        upper = dij + sampling_slack(u.values - _shift_values(v.values, a[j], u.L), u.L)
        if upper <= link or dij - allowance > link:
            return dij
        _, upper = shift_upper_bound(u, v)
        if upper <= link:
            return upper
    if allowance == 0.0:
        return dij
    return orbit_distance(u, v)


def distance_matrix(profiles: Sequence[GridFunction], link: float | None = None) -> np.ndarray:
    """Pairwise orbit distances.

    Without ``link`` every pair is refined.  With a ``link`` threshold the
    grid estimate is kept whenever it already decides whether the pair links.
    """
    m = len(profiles)
    D = np.zeros((m, m))
    allowance = _slope_bound(profiles)
    for i in range(m):
        for j in range(i + 1, m):
            D[i, j] = D[j, i] = _linked(profiles[i], profiles[j], link, allowance)
    return D


@dataclass
class Cluster:
    cluster_id: int
    members: list[int]
    representative: OrbitSnapshot
    diameter: float
    score: float | None = None

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class Clustering:
    clusters: list[Cluster]
    distances: np.ndarray
    eps: float
    sample: OmegaSample


def default_eps(sample: OmegaSample) -> float:
    return 1e-3 * sample.amplitude


def _diameter(profiles: Sequence[GridFunction], medoid: int, members: Sequence[int]) -> float:
    """Sum of the two largest refined distances from the medoid.

    By the triangle inequality this bounds the cluster diameter from above;
    it is exact for two members and needs only one refinement per member.
    """
    radii = sorted((orbit_distance(profiles[medoid], profiles[i]) for i in members if i != medoid),
                   reverse=True)
    return float(sum(radii[:2]))


def cluster_modulo_shift(sample: OmegaSample, eps_cluster: float | None = None) -> Clustering:
    """Single-linkage clusters of the sample under the orbit distance.

    Representatives are medoids (least maximal distance to the rest of the
    cluster).  Cluster ids follow the first appearance in time.  Diameters
    are upper bounds from refined medoid distances.
    """
    snaps = sample.snapshots
    if not snaps:
        raise ValueError("empty omega sample")
    eps = default_eps(sample) if eps_cluster is None else float(eps_cluster)
    profiles = [s.profile for s in snaps]
    D = distance_matrix(profiles, link=eps)
    if len(snaps) == 1:
        labels = np.array([1])
    else:
        Z = linkage(squareform(D, checks=False), method="single")
        labels = fcluster(Z, t=eps, criterion="distance")
    order: dict[int, int] = {}
    for lab in labels:
        order.setdefault(int(lab), len(order))
    clusters = []
    for lab, cid in sorted(order.items(), key=lambda kv: kv[1]):
        members = [i for i in range(len(snaps)) if labels[i] == lab]
        sub = D[np.ix_(members, members)]
        medoid = members[int(np.argmin(sub.max(axis=1)))]
        clusters.append(Cluster(cid, members, snaps[medoid], _diameter(profiles, medoid, members)))
    return Clustering(clusters, D, eps, sample)


def distance_to_members(u: GridFunction, members: Sequence[GridFunction], eps: float) -> float:
    """Orbit distance from u to the members, exact enough to compare with 2 eps.

    Stops at the first member within 2 eps, so below that level the value is
    a witness rather than the minimum.
    """
    best = math.inf
    for v in members:
        best = min(best, _linked(u, v, 2.0 * eps, _slope_bound([u, v])))
        if best <= 2.0 * eps:
            break
    return best


def future_returns(snap: OrbitSnapshot, sample: OmegaSample, field: ForcingField,
                   horizon: float):
    """Yield profiles at the base returns after ``snap`` within ``horizon``."""
    times = return_times(snap.base, field.omega, sample.target_base, sample.delta_base,
                         snap.t + 1e-9, snap.t + horizon)
    cur, t_cur = snap.profile.values, snap.t
    for t_next in times:
        seg_base = translate(snap.base, t_cur - snap.t, field.omega)
        steps = math.ceil((t_next - t_cur) / sample.dt - 1e-9)
        _, frames = run_batch(cur, "circle", snap.profile.L, seg_base, field, t_next - t_cur,
                              sample.dt, capture=[steps], t0=t_cur)
        cur, t_cur = frames[-1][0], float(t_next)
        yield snap.profile.with_values(cur)


def near_minimality_score(cluster: Cluster, clustering: Clustering, field: ForcingField,
                          recheck_horizon: float) -> float:
    """Fraction of the representative's future base returns within 2 eps of the cluster.

    1.0 is consistent with the cluster being (a sample of) a minimal set.
    """
    sample = clustering.sample
    eps = clustering.eps
    members = [sample.snapshots[i].profile for i in cluster.members]
    hits = total = 0
    for prof in future_returns(cluster.representative, sample, field, recheck_horizon):
        total += 1
        hits += distance_to_members(prof, members, eps) <= 2.0 * eps
    if total == 0:
        raise InsufficientReturnsError(0, 1)
    return hits / total


# ---------------------------------------------------------------------------
# trichotomy

@dataclass
class ConnectingEvidence:
    index: int
    t: float
    backward_cluster: int
    forward_cluster: int


@dataclass
class TrichotomyReport:
    alternative: str
    clusters: list[Cluster]
    connecting_evidence: list[ConnectingEvidence]
    eps: float
    n_snapshots: int
    red_flag: bool = False
    notes: list[str] = dc_field(default_factory=list)

    def __post_init__(self):
        if self.alternative not in ALTERNATIVES:
            raise ValueError(f"unknown alternative {self.alternative!r}")
        if self.alternative in ALTERNATIVES[1:3] and not self.connecting_evidence:
            raise ValueError("connecting alternatives need connecting evidence")

    @property
    def high_clusters(self) -> list[Cluster]:
        return [c for c in self.clusters if (c.score or 0.0) >= HIGH_SCORE]

    def to_text(self) -> str:
        lines = [
            f"alternative = {self.alternative}",
            f"n_snapshots = {self.n_snapshots}",
            f"eps_cluster = {self.eps!r}",
            f"n_clusters = {len(self.clusters)}",
            f"n_high_clusters = {len(self.high_clusters)}",
            f"n_connecting = {len(self.connecting_evidence)}",
            f"red_flag = {str(self.red_flag).lower()}",
        ]
        for ev in self.connecting_evidence:
            lines.append(f"connecting.{ev.index} = t={ev.t!r} from={ev.backward_cluster} "
                         f"to={ev.forward_cluster}")
        for note in self.notes:
            lines.append(f"note = {note}")
        return "\n".join(lines) + "\n"


def write_report(path, report: TrichotomyReport) -> None:
    with open(path, "w") as fh:
        fh.write(report.to_text())


def write_cluster_table(path, clusters: Sequence[Cluster]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster_id", "size", "diameter", "score"])
        for c in clusters:
            w.writerow([c.cluster_id, c.size, repr(float(c.diameter)),
                        "" if c.score is None else repr(float(c.score))])


def _nearest_high(i: int, clustering: Clustering, high: Sequence[Cluster]):
    """(cluster id, distance) of the high cluster closest to snapshot i."""
    best = (-1, math.inf)
    for c in high:
        d = float(np.min(clustering.distances[i, c.members]))
        if d < best[1]:
            best = (c.cluster_id, d)
    return best


def _connecting(clustering: Clustering, high: Sequence[Cluster], field: ForcingField,
                horizon: float) -> tuple[list[ConnectingEvidence], int]:
    """Evidence that every outlier approaches the high clusters both ways.

    Backward: an earlier stored snapshot of the trajectory lies within 2 eps
    of a high cluster.  Forward: a later stored snapshot does, or, for the
    last snapshots, re-integration over ``horizon`` reaches one.
    """
    eps = clustering.eps
    sample = clustering.sample
    in_high = {i for c in high for i in c.members}
    outliers = [i for i in range(len(sample.snapshots)) if i not in in_high]
    near = {i: _nearest_high(i, clustering, high) for i in range(len(sample.snapshots))}
    evidence, failures = [], 0
    for i in outliers:
        back = [near[j] for j in range(i) if near[j][1] <= 2.0 * eps]
        fwd = [near[j] for j in range(i + 1, len(sample.snapshots)) if near[j][1] <= 2.0 * eps]
        if not fwd:
            members = [sample.snapshots[m].profile for c in high for m in c.members]
            for prof in future_returns(sample.snapshots[i], sample, field, horizon):
                if distance_to_members(prof, members, eps) <= 2.0 * eps:
                    fwd = [(-1, 0.0)]
                    break
        if back and fwd:
            evidence.append(ConnectingEvidence(i, sample.snapshots[i].t, back[-1][0], fwd[0][0]))
        else:
            failures += 1
    return evidence, failures


def classify_trichotomy(clustering: Clustering, field: ForcingField,
                        recheck_horizon: float = 5.0, _recheck: bool = True,
                        u0: GridFunction | None = None, base: BasePoint | None = None
                        ) -> TrichotomyReport:
    """Classify an omega sample into one of the three alternatives, or inconclusive.

    Every cluster is scored with ``near_minimality_score``.  Three or more
    high-score clusters trigger a recheck with eps halved and t_max doubled
    (when ``u0`` and ``base`` are given); persistence is a red flag.
    """
    sample = clustering.sample
    eps = clustering.eps
    for c in clustering.clusters:
        if c.score is None:
            c.score = near_minimality_score(c, clustering, field, recheck_horizon)
    high = [c for c in clustering.clusters if c.score >= HIGH_SCORE]
    n = len(sample.snapshots)
    notes: list[str] = []

    def report(alt, evidence=(), red=False):
        return TrichotomyReport(alt, clustering.clusters, list(evidence), eps, n, red, notes)

    if len(high) >= 3:
        if not _recheck or u0 is None or base is None:
            notes.append("three or more high-score clusters")
            return report("inconclusive", red=not _recheck)
        again = collect_omega_sample(u0, base, field, 2.0 * sample.t_max, sample.delta_base,
                                     sample.transient_discard, sample.dt, sample.target_base)
        sub = classify_trichotomy(cluster_modulo_shift(again, eps / 2.0), field,
                                  recheck_horizon, _recheck=False)
        if len(sub.high_clusters) >= 3:
            sub.red_flag = True
            sub.notes.append("three or more high-score clusters persist under recheck")
        return sub
    if not high:
        notes.append("no cluster passes the near-minimality score")
        return report("inconclusive")
    if len(high) == 1 and high[0].size >= 0.95 * n:
        return report("single_minimal")
    if len(high) == 2:
        sep = float(clustering.distances[high[0].members][:, high[1].members].min())
        if sep <= 10.0 * eps:
            notes.append(f"high clusters only {sep:.3g} apart")
            return report("inconclusive")
    evidence, failures = _connecting(clustering, high, field, recheck_horizon)
    if failures or not evidence:
        notes.append(f"{failures} outliers without two-sided approach")
        return report("inconclusive")
    alt = "minimal_plus_connecting" if len(high) == 1 else "two_minimal_plus_connecting"
    return report(alt, evidence)


def shift_sample(sample: OmegaSample, a: float) -> OmegaSample:
    """The same sample with every profile shifted by a."""
    snaps = [OrbitSnapshot(s.profile.with_values(_shift_values(s.profile.values, a, s.profile.L)),
                           s.base, s.t) for s in sample.snapshots]
    return OmegaSample(snaps, sample.target_base, sample.transient_discard, sample.delta_base,
                       sample.dt, sample.t_max)


def max_hull_offset(sample: OmegaSample) -> float:
    return max(hull_distance(s.base, sample.target_base) for s in sample.snapshots)
