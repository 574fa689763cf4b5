import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TWO_PI, trig_profile
from skewlab.forcing import BasePoint, ForcingField, Term, hull_distance, translate
from skewlab.group_action import orbit_distance, shift
from skewlab.pde_core import GridFunction, OrbitSnapshot
from skewlab.scenarios import make_field, make_profile
from skewlab.skew_product import (Cluster, Clustering, ConnectingEvidence,
                                  InsufficientReturnsError, OmegaSample, TrichotomyReport,
                                  classify_trichotomy, cluster_modulo_shift,
                                  collect_omega_sample, near_minimality_score, return_times,
                                  write_cluster_table, write_report)

SQRT2 = math.sqrt(2.0)


def manual_sample(profiles, k=1):
    base = BasePoint.zeros(k)
    snaps = [OrbitSnapshot(p, base, float(i + 1)) for i, p in enumerate(profiles)]
    return OmegaSample(snaps, base, 0.0, 0.02, dt=1e-2, t_max=float(len(profiles) + 1))


# -- return times -----------------------------------------------------------

@pytest.mark.parametrize("delta", [0.01, 0.2, 0.45])
def test_periodic_base_returns_at_integers(delta):
    b = BasePoint((0.3,))
    t = return_times(b, [1.0], b, delta, 0.5, 30.5)
    assert np.array_equal(t, np.arange(1.0, 31.0))


def _scan_visits(omega, delta, t_end, dt=1e-3):
    """Oracle: closest approach per visit from a dense scan of the torus orbit."""
    t = np.arange(0.0, t_end, dt)
    ph = np.outer(t, omega)
    dist = np.max(np.abs(ph - np.round(ph)), axis=1)
    inside = dist < delta
    edges = np.flatnonzero(np.diff(inside.astype(int)))
    runs = np.split(np.arange(t.size), edges + 1)
    return np.array([t[r[np.argmin(dist[r])]] for r in runs if inside[r[0]]])


def test_two_frequency_returns_match_phase_scan_and_three_gaps():
    omega = [1.0, SQRT2]
    delta = 0.02
    t_end = 3000.0
    t = return_times(BasePoint((0.0, 0.0)), omega, BasePoint((0.0, 0.0)), delta, 0.0, t_end)
    scan = _scan_visits(omega, delta, t_end)
    assert t.size == scan.size > 20
    assert np.max(np.abs(t - scan)) < 2e-3
    # closest approaches sit next to integers m with ||m sqrt 2|| small; the
    # gaps between such m take at most three values, the largest the sum of the others
    gaps = sorted(set(np.diff(np.round(t)).astype(int)))
    assert len(gaps) <= 3
    if len(gaps) == 3:
        assert gaps[2] == gaps[0] + gaps[1]


@given(th=st.tuples(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True)),
       delta=st.floats(0.01, 0.3))
@settings(max_examples=30)
def test_returns_lie_in_the_ball(th, delta):
    omega = np.array([1.0, SQRT2])
    base, target = BasePoint(th), BasePoint((0.25, 0.5))
    for t in return_times(base, omega, target, delta, 0.0, 200.0):
        assert hull_distance(translate(base, t, omega), target) <= delta + 1e-12


# -- collect_omega_sample ---------------------------------------------------

def test_heat_sample_is_the_mean_profile():
    u0 = make_profile({"mean": 0.4, "modes": [[1, 1.0, 0.5], [3, 0.0, 0.2]]}, 32, TWO_PI)
    sample = collect_omega_sample(u0, BasePoint((0.0,)), make_field("heat"), 60.0,
                                  transient_discard=25.0, dt=1e-2)
    assert len(sample.snapshots) >= 20
    assert [s.t for s in sample.snapshots] == list(np.arange(25.0, 61.0))
    for s in sample.snapshots:
        assert np.max(np.abs(s.profile.values - 0.4)) < 1e-8
        assert hull_distance(s.base, sample.target_base) < sample.delta_base


def test_too_short_run_reports_count():
    u0 = GridFunction(np.ones(16), "circle", TWO_PI)
    with pytest.raises(InsufficientReturnsError) as info:
        collect_omega_sample(u0, BasePoint((0.0,)), make_field("bistable"), 10.0)
    assert info.value.count == 9


def test_sampling_is_deterministic():
    u0 = make_profile({"mean": 0.2, "modes": [[1, 0.5, 0.3]]}, 32, TWO_PI)
    runs = [collect_omega_sample(u0, BasePoint((0.0,)), make_field("forced_bistable"), 25.0,
                                 dt=1e-2) for _ in range(2)]
    for a, b in zip(runs[0].snapshots, runs[1].snapshots):
        assert a.t == b.t and np.array_equal(a.profile.values, b.profile.values)


def test_qp_scalar_forcing_tracks_mean_quadrature():
    # f = 0.3 cos(2 pi t) + 0.2 sin(2 pi sqrt2 t): the profile flattens onto
    # ubar(t) = m + 0.3 sin(2 pi t) / 2 pi - 0.2 (cos(2 pi sqrt2 t) - 1) / (2 pi sqrt2)
    field = ForcingField((1.0, SQRT2), (Term(0.3, (1, 0), "cos", "1"),
                                        Term(0.2, (0, 1), "sin", "1")))
    u0 = make_profile({"mean": 0.1, "modes": [[1, 0.5, 0.0]]}, 32, TWO_PI)
    sample = collect_omega_sample(u0, BasePoint((0.0, 0.0)), field, 400.0,
                                  delta_base=0.1, transient_discard=30.0, dt=1e-2)

    def ubar(t):
        return (0.1 + 0.3 * np.sin(TWO_PI * t) / TWO_PI
                - 0.2 * (np.cos(TWO_PI * SQRT2 * t) - 1.0) / (TWO_PI * SQRT2))

    assert len(sample.snapshots) >= 20
    for s in sample.snapshots:
        # second-order time error, about 3e-6 at dt = 1e-2
        assert np.max(np.abs(s.profile.values - ubar(s.t))) < 2e-5
    # within the base ball ubar varies by at most (0.3 + 0.2) delta
    clustering = cluster_modulo_shift(sample, 0.05)
    assert len(clustering.clusters) == 1
    report = classify_trichotomy(clustering, field, 20.0)
    assert report.alternative == "single_minimal"


# -- clustering -------------------------------------------------------------

def test_shifts_of_one_profile_form_one_cluster():
    rng = np.random.default_rng(0)
    u, *_ = trig_profile(rng, 64, TWO_PI, n_modes=4)
    sample = manual_sample([shift(u, a) for a in rng.uniform(0, TWO_PI, 25)])
    clustering = cluster_modulo_shift(sample)
    (c,) = clustering.clusters
    assert c.size == 25 and c.diameter < 1e-6


def test_mixture_splits_into_two_clusters():
    L = TWO_PI
    ustar = GridFunction.from_function(np.cos, 64, L)
    vstar = ustar.with_values(ustar.values + 0.8)
    # cos x - cos(x + a) has mean zero, so it vanishes somewhere and the
    # distance to cos + 0.8 is at least 0.8, attained at a = 0
    assert orbit_distance(ustar, vstar) == pytest.approx(0.8, abs=1e-9)
    rng = np.random.default_rng(1)
    profiles, truth = [], []
    for i in range(30):
        centre = ustar if i % 3 else vstar
        noise, *_ = trig_profile(rng, 64, L, n_modes=3)
        noisy = centre.with_values(centre.values + 1e-4 * noise.values)
        profiles.append(shift(noisy, rng.uniform(0, L)))
        truth.append(i % 3 != 0)
    clustering = cluster_modulo_shift(manual_sample(profiles), 0.05)
    assert len(clustering.clusters) == 2
    for c in clustering.clusters:
        assert len({truth[i] for i in c.members}) == 1
    assert sorted(c.size for c in clustering.clusters) == [10, 20]


def test_empty_sample_rejected():
    with pytest.raises(ValueError):
        cluster_modulo_shift(manual_sample([]))


# -- scores -----------------------------------------------------------------

def _scored(field, u0, t_max, discard, horizon=5.0, eps=None):
    sample = collect_omega_sample(u0, BasePoint.zeros(field.k), field, t_max,
                                  transient_discard=discard, dt=1e-2)
    clustering = cluster_modulo_shift(sample, eps)
    return clustering, [near_minimality_score(c, clustering, field, horizon)
                        for c in clustering.clusters]


def test_equilibrium_and_heat_scores():
    one = GridFunction(np.ones(32), "circle", TWO_PI)
    _, scores = _scored(make_field("bistable"), one, 30.0, 6.0)
    assert scores == [1.0]
    u0 = make_profile({"mean": -0.3, "modes": [[2, 0.4, 0.0]]}, 32, TWO_PI)
    _, scores = _scored(make_field("heat"), u0, 40.0, 20.0)
    assert scores == [1.0]


def test_connecting_snapshot_scores_below_one():
    field = make_field("weak_bistable")
    u0 = GridFunction(np.full(32, 1e-6), "circle", TWO_PI)
    sample = collect_omega_sample(u0, BasePoint((0.0,)), field, 200.0, transient_discard=0.0,
                                  dt=1e-2)
    # the snapshot at t = 60 sits on the heteroclinic rise 1e-6 e^{0.1 t} -> sqrt(0.1)
    i = next(j for j, s in enumerate(sample.snapshots) if s.t == 60.0)
    clustering = Clustering([], np.zeros((1, 1)), 1e-3 * sample.amplitude, sample)
    seeded = Cluster(0, [i], sample.snapshots[i], 0.0)
    assert near_minimality_score(seeded, clustering, field, 10.0) < 1.0


# -- classification ---------------------------------------------------------

def test_bistable_near_one_is_single_minimal():
    u0 = make_profile({"mean": 0.9, "modes": [[1, 0.05, 0.0]]}, 64, TWO_PI)
    field = make_field("bistable")
    sample = collect_omega_sample(u0, BasePoint((0.0,)), field, 40.0, transient_discard=8.0,
                                  dt=1e-2)
    report = classify_trichotomy(cluster_modulo_shift(sample), field)
    assert report.alternative == "single_minimal"
    (c,) = report.clusters
    assert np.max(np.abs(c.representative.profile.values - 1.0)) < 1e-6


def test_small_perturbation_of_zero_connects():
    # phase line of u' = 0.1 u - u^3: 0 is unstable, sqrt(0.1) attracts; with
    # no discard the early snapshots near 0 connect the two equilibria
    field = make_field("weak_bistable")
    u0 = GridFunction(np.full(32, 1e-6), "circle", TWO_PI)
    sample = collect_omega_sample(u0, BasePoint((0.0,)), field, 250.0, transient_discard=0.0,
                                  dt=1e-2)
    report = classify_trichotomy(cluster_modulo_shift(sample), field)
    assert report.alternative in ("minimal_plus_connecting", "two_minimal_plus_connecting")
    assert report.connecting_evidence and not report.red_flag
    # the latest member of the upper cluster has settled on sqrt(0.1)
    latest = max(max(c.members) for c in report.high_clusters)
    assert sample.snapshots[latest].profile.values.mean() == pytest.approx(math.sqrt(0.1),
                                                                           abs=1e-6)
    # with a long discard only the attracting state survives
    late = collect_omega_sample(u0, BasePoint((0.0,)), field, 250.0, transient_discard=200.0,
                                dt=1e-2)
    assert classify_trichotomy(cluster_modulo_shift(late), field).alternative == "single_minimal"


def test_three_high_clusters_raise_red_flag():
    L = TWO_PI
    profiles = [GridFunction(np.full(16, c), "circle", L) for c in (-1.0, 0.0, 1.0) for _ in range(7)]
    clustering = cluster_modulo_shift(manual_sample(profiles), 1e-3)
    assert len(clustering.clusters) == 3
    for c in clustering.clusters:
        c.score = 1.0
    report = classify_trichotomy(clustering, make_field("bistable"), _recheck=False)
    assert report.red_flag and report.alternative == "inconclusive"


def test_shift_covariance():
    L = 4 * math.pi
    field = make_field("forced_bistable")
    u0 = make_profile({"mean": 0.0, "modes": [[1, 0.0, 0.8]]}, 64, L)
    a = 1.0
    runs = []
    for start in (u0, shift(u0, a)):
        sample = collect_omega_sample(start, BasePoint((0.0,)), field, 40.0,
                                      transient_discard=8.0, dt=1e-2)
        clustering = cluster_modulo_shift(sample)
        runs.append((sample, classify_trichotomy(clustering, field)))
    (s0, r0), (s1, r1) = runs
    assert r0.alternative == r1.alternative
    assert [c.size for c in r0.clusters] == [c.size for c in r1.clusters]
    for c0, c1 in zip(r0.clusters, r1.clusters):
        assert orbit_distance(c0.representative.profile, c1.representative.profile) < 1e-6
    for p, q in zip(s0.snapshots, s1.snapshots):
        assert np.max(np.abs(shift(p.profile, a).values - q.profile.values)) < 1e-6


# -- report -----------------------------------------------------------------

def test_report_invariants():
    with pytest.raises(ValueError):
        TrichotomyReport("minimal_plus_connecting", [], [], 1e-3, 20)
    with pytest.raises(ValueError):
        TrichotomyReport("four_minimal", [], [], 1e-3, 20)
    TrichotomyReport("two_minimal_plus_connecting", [], [ConnectingEvidence(3, 1.0, 0, 1)],
                     1e-3, 20)


def test_report_and_table_schema(tmp_path):
    snap = OrbitSnapshot(GridFunction(np.ones(16), "circle", 1.0), BasePoint((0.0,)), 2.0)
    clusters = [Cluster(0, [0, 1], snap, 1e-4, 1.0), Cluster(1, [2], snap, 0.0, 0.5)]
    rep = TrichotomyReport("minimal_plus_connecting", clusters,
                           [ConnectingEvidence(2, 3.0, 0, 0)], 1e-3, 3, notes=["x"])
    write_report(tmp_path / "r.txt", rep)
    pairs = dict(line.split(" = ", 1) for line in (tmp_path / "r.txt").read_text().splitlines())
    assert pairs["alternative"] == "minimal_plus_connecting"
    assert pairs["n_clusters"] == "2" and pairs["n_high_clusters"] == "1"
    assert pairs["red_flag"] == "false" and pairs["connecting.2"] == "t=3.0 from=0 to=0"
    write_cluster_table(tmp_path / "c.csv", clusters)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines == ["cluster_id,size,diameter,score", "0,2,0.0001,1.0", "1,1,0.0,0.5"]
