"""Named experiment presets with their config validation and runners.

A config is a JSON object with ``scenario`` plus any overrides of the
preset's sections (``forcing``, ``domain``, ``initial``, ``integration``,
``analysis``, ``seed``).  Overrides are merged into the preset and the
merged result is what gets echoed, so every threshold used by a run is
written next to its outputs.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import quad

from . import circle_reduction as cr
from . import skew_product as sp
from . import torus_example as tx
from . import zero_number as zn
from .forcing import (BasePoint, ForcingConfigError, ForcingField, almost_period_scan,
                      translate)
from .group_action import shift
from .pde_core import (GridFunction, OrbitSnapshot, TrigInterpolant, integrate, run_batch,
                       solve_by_extension, solve_interval, write_snapshots_csv)

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# named forcing fields

def _t(coeff, factor, trig="cos", mode=(0,)):
    return {"coeff": coeff, "mode": list(mode), "trig": trig, "factor": factor, "beta": 1.0}


FIELDS: dict[str, dict] = {
    "heat": {"frequencies": [1.0], "terms": [],
             "symmetry": {"even_in_p": True, "odd_in_u": True, "zero_at_u0": True}},
    "drift": {"frequencies": [1.0], "terms": [_t(-1.0, "p")]},
    "bistable": {"frequencies": [1.0], "terms": [_t(1.0, "u"), _t(-1.0, "u3")],
                 "symmetry": {"even_in_p": True, "odd_in_u": True, "zero_at_u0": True}},
    "forced_bistable": {"frequencies": [1.0],
                        "terms": [_t(1.0, "u"), _t(-1.0, "u3"), _t(0.3, "u", "sin", (1,))],
                        "symmetry": {"even_in_p": True, "odd_in_u": True, "zero_at_u0": True}},
    "bistable_drift": {"frequencies": [1.0],
                       "terms": [_t(1.0, "u"), _t(-1.0, "u3"), _t(0.5, "up")],
                       "symmetry": {"odd_in_u": True, "zero_at_u0": True}},
    "forced_mixed": {"frequencies": [1.0],
                     "terms": [_t(1.0, "u"), _t(-1.0, "u3"), _t(0.3, "up", "cos", (1,)),
                               _t(0.2, "u", "sin", (1,))],
                     "symmetry": {"odd_in_u": True, "zero_at_u0": True}},
    "qp_mixed": {"frequencies": [1.0, math.sqrt(2.0)],
                 "terms": [_t(1.0, "u", mode=(0, 0)), _t(-1.0, "u3", mode=(0, 0)),
                           _t(0.5, "p", mode=(1, 0)), _t(0.3, "up", "sin", (0, 1)),
                           _t(0.2, "p2", mode=(1, 1))]},
    "burgers": {"frequencies": [1.0, math.sqrt(2.0)],
                "terms": [_t(-1.0, "up", mode=(0, 0)), _t(0.3, "1", "cos", (1, 0)),
                          _t(0.2, "u", "sin", (0, 1))]},
    "neumann_even": {"frequencies": [1.0],
                     "terms": [_t(1.0, "u"), _t(-1.0, "u3"), _t(0.3, "p2", "cos", (1,)),
                               _t(0.2, "1", "sin", (1,))],
                     "symmetry": {"even_in_p": True}},
    "dirichlet_odd": {"frequencies": [1.0],
                      "terms": [_t(1.0, "u"), _t(-1.0, "u3"), _t(0.3, "sin", "cos", (1,)),
                                _t(0.2, "u", "sin", (1,))],
                      "symmetry": {"even_in_p": True, "odd_in_u": True, "zero_at_u0": True}},
    "weak_bistable": {"frequencies": [1.0], "terms": [_t(0.1, "u"), _t(-1.0, "u3")],
                      "symmetry": {"even_in_p": True, "odd_in_u": True, "zero_at_u0": True}},
}


def make_field(spec) -> ForcingField:
    if isinstance(spec, str):
        if spec not in FIELDS:
            raise ConfigError("forcing", f"unknown field preset {spec!r}; known: {sorted(FIELDS)}")
        spec = FIELDS[spec]
    try:
        return ForcingField.from_dict(spec)
    except ForcingConfigError as exc:
        raise ConfigError("forcing", str(exc)) from exc


def expand_field(spec) -> dict:
    return make_field(spec).to_dict()


# ---------------------------------------------------------------------------
# initial data

def random_trig(rng: np.random.Generator, n_modes: int, domain: str = "circle",
                mean_scale: float = 0.5) -> dict:
    """Random trig-polynomial description with coefficients N(0, 1) / k."""
    modes = []
    for k in range(1, n_modes + 1):
        a, b = rng.normal(size=2) / k
        if domain == "neumann":
            b = 0.0
        elif domain == "dirichlet":
            a = 0.0
        modes.append([k, float(a), float(b)])
    mean = 0.0 if domain == "dirichlet" else float(mean_scale * rng.normal())
    return {"mean": mean, "modes": modes}


def make_profile(spec: dict, n: int, L: float, domain: str = "circle",
                 path: str = "initial") -> GridFunction:
    """Build a profile from ``{"mean": m, "modes": [[k, a, b], ...]}``.

    Mode k contributes a cos(2 pi k x / P) + b sin(2 pi k x / P) where P is
    the circle length L or, on intervals, 2L (so cosines satisfy Neumann and
    sines Dirichlet conditions).
    """
    if not isinstance(spec, dict):
        raise ConfigError(path, "must be an object with 'mean' and 'modes'")
    P = L if domain == "circle" else 2.0 * L
    mean = float(spec.get("mean", 0.0))
    modes = spec.get("modes", [])
    try:
        modes = [(int(k), float(a), float(b)) for k, a, b in modes]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.modes", "entries must be [k, a, b]") from exc
    if domain == "dirichlet" and (mean or any(a for _, a, _ in modes)):
        raise ConfigError(path, "dirichlet data must be a pure sine series")

    def func(x):
        out = np.full_like(x, mean)
        for k, a, b in modes:
            out = out + a * np.cos(TWO_PI * k * x / P) + b * np.sin(TWO_PI * k * x / P)
        return out

    return GridFunction.from_function(func, n, L, domain)


# ---------------------------------------------------------------------------
# results

@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str


@dataclass
class ScenarioResult:
    scenario: str
    assertions: list[Assertion] = dc_field(default_factory=list)
    info: dict = dc_field(default_factory=dict)

    def check(self, name: str, passed, detail: str) -> None:
        self.assertions.append(Assertion(name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def summary_text(self) -> str:
        lines = [f"scenario = {self.scenario}",
                 f"status = {'pass' if self.passed else 'fail'}",
                 f"assertions = {len(self.assertions)}"]
        for a in self.assertions:
            lines.append(f"assert.{a.name} = {'pass' if a.passed else 'fail'} | {a.detail}")
        for k, v in self.info.items():
            lines.append(f"info.{k} = {v}")
        return "\n".join(lines) + "\n"


def _csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _g(x) -> str:
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# Sturm machinery shared with the acceptance suite

def sturm_pairs(field: ForcingField, L: float, n: int, n_pairs: int, rng: np.random.Generator,
                t_start: float = 0.01, t_end: float = 5.0, dt: float = 1e-3,
                sample_every: int = 20, n_modes: int = 6, refine_factor: int = 8,
                tail_fraction: float = 0.2):
    """Integrate random pairs together and audit the zero number of each difference."""
    profiles = []
    for _ in range(2 * n_pairs):
        profiles.append(make_profile(random_trig(rng, n_modes), n, L).values)
    base = BasePoint(tuple(rng.random(field.k)))
    steps = math.ceil(t_end / dt - 1e-9)
    h = t_end / steps
    first = math.ceil(t_start / h - 1e-9)
    capture = list(range(first, steps + 1, sample_every))
    if capture[-1] != steps:
        capture.append(steps)
    times, frames = run_batch(np.vstack(profiles), "circle", L, base, field, t_end, dt,
                              capture=capture)
    bases = [translate(base, t, field.omega) for t in times]
    audits = []
    for p in range(n_pairs):
        o1 = [OrbitSnapshot(GridFunction(frames[i, 2 * p], "circle", L), bases[i], float(t))
              for i, t in enumerate(times)]
        o2 = [OrbitSnapshot(GridFunction(frames[i, 2 * p + 1], "circle", L), bases[i], float(t))
              for i, t in enumerate(times)]
        series = zn.track_difference(o1, o2)
        refine = zn.difference_refiner(o1, o2, field, h, factor=refine_factor)
        audits.append((series, zn.audit_series(series, refine, tail_fraction)))
    return audits


def shift_constancy_counts(snapshots, n_shifts: int = 32, tol: float = 1e-9):
    """z(phi - sigma_a phi) for a_j = j L / n_shifts; numerically-zero differences skipped."""
    rows = []
    for s in snapshots:
        L = s.profile.L
        for j in range(n_shifts):
            a = j * L / n_shifts
            diff = s.profile.values - shift(s.profile, a).values
            if np.max(np.abs(diff)) < 1e-12 * max(1.0, np.max(np.abs(s.profile.values))):
                continue
            rep = zn.zero_number(s.profile.with_values(diff), tol, strict=False)
            rows.append((s.t, a, rep.count, rep.unresolved))
    return rows


# ---------------------------------------------------------------------------
# presets

CIRCLE = {"L": TWO_PI, "n": 128, "bc": "circle"}

DEFAULTS: dict[str, dict] = {
    "heat_decay": {
        "forcing": "heat", "domain": dict(CIRCLE),
        "initial": {"mean": 0.0, "modes": [[1, 1.0, 0.0]]},
        "integration": {"dt": 1e-3, "t_end": 1.0, "sample_every": 50},
        "analysis": {"mode": 1, "rate_tol": 1e-4, "error_tol": 1e-6},
    },
    "zero_monotone": {
        "forcing": "bistable", "domain": {"L": math.pi, "n": 64, "bc": "circle"},
        "initial": {"random_modes": 6},
        "integration": {"dt": 1e-3, "t_start": 0.01, "t_end": 5.0, "sample_every": 20},
        "analysis": {"pairs": 10, "tol": 1e-9, "refine_factor": 8, "tail_fraction": 0.2},
    },
    "drop_witness": {
        "forcing": "heat", "domain": dict(CIRCLE),
        "initial": {"collision_offset": 0.2,
                    "mode_mixing": {"mean": 0.0, "modes": [[1, 0.0, 1.0], [3, 0.0, 2.0]]}},
        "integration": {"dt": 1e-3, "sample_every": 10, "t_end_collision": 0.5,
                        "t_end_mixing": 2.0},
        "analysis": {"refine_factor": 8, "witness_tol": 0.05, "check_factor": 4},
    },
    "extension_equivalence_neumann": {
        "forcing": "neumann_even", "domain": {"L": math.pi, "n": 65, "bc": "neumann"},
        "initial": {"random_modes": 5, "cases": 10},
        "integration": {"dt": 1e-3, "t_end": 1.0},
        "analysis": {"tol": 1e-6},
    },
    "extension_equivalence_dirichlet": {
        "forcing": "dirichlet_odd", "domain": {"L": math.pi, "n": 65, "bc": "dirichlet"},
        "initial": {"random_modes": 5, "cases": 10},
        "integration": {"dt": 1e-3, "t_end": 1.0},
        "analysis": {"tol": 1e-6},
    },
    "shift_constancy": {
        "forcing": "forced_bistable", "domain": {"L": 4 * math.pi, "n": 64, "bc": "circle"},
        "initial": {"mean": 0.0, "modes": [[1, 0.0, 0.8]]},
        "integration": {"dt": 1e-2, "t_max": 60.0, "sample_dt": 0.5},
        "analysis": {"delta_base": 0.02, "eps_cluster": None, "transient_discard": 12.0,
                     "recheck_horizon": 5.0, "high_score": sp.HIGH_SCORE, "shifts": 32,
                     "tol": 1e-9},
    },
    "circle_reduction": {
        "forcing": "qp_mixed", "domain": dict(CIRCLE),
        "initial": {"mean": 0.3, "modes": [[1, 1.0, 0.0], [2, 0.0, 0.3]]},
        "integration": {"dt_levels": [0.01, 0.005, 0.0025], "t_end": 3.0},
        "analysis": {"window": [0.5, 2.9], "min_factor": 1.8, "max_residual": 5e-3,
                     "ap_eps": 0.05},
    },
    "symmetric_conjugacy": {
        "forcing": "bistable", "domain": {"L": 4 * math.pi, "n": 64, "bc": "circle"},
        "initial": {"trajectories": [
            {"mean": 0.0, "modes": [[1, 0.0, 0.8]]},
            {"mean": 0.0, "modes": [[1, 0.0, -0.8]]},
            {"mean": 0.9, "modes": []},
            {"mean": -0.9, "modes": []}]},
        "integration": {"dt": 1e-2, "t_max": 30.0},
        "analysis": {"delta_base": 0.02, "transient_discard": 6.0, "residual_rel": 1e-5,
                     "base_tol": 1e-9, "same_tol": 1e-8, "sep_tol": 1e-8},
    },
    "trichotomy_scan": {
        "forcing": "bistable", "domain": {"L": TWO_PI, "n": 64, "bc": "circle"},
        "initial": {},
        "integration": {"dt": 1e-2},
        "analysis": {"recheck_horizon": 5.0, "delta_base": 0.02, "cases": [
            {"name": "bistable", "forcing": "bistable",
             "initial": {"mean": 0.9, "modes": [[1, 0.05, 0.0]]}, "t_max": 40.0,
             "transient_discard": 8.0, "expect": ["single_minimal"]},
            {"name": "connecting", "forcing": "weak_bistable",
             "initial": {"mean": 1e-6, "modes": []}, "t_max": 250.0,
             "transient_discard": 0.0,
             "expect": ["minimal_plus_connecting", "two_minimal_plus_connecting"]},
        ]},
    },
    "fink_torus": {
        "forcing": None, "domain": {}, "initial": {"eta": 0.0},
        "integration": {"dt": 1e-3, "n_iterates": 10000, "monitor_t": 10000.0},
        "analysis": {"cases": [
            {"name": "rigid_irrational", "field": {"const": math.sqrt(2.0) - 1.0, "terms": []},
             "expect_class": "dense", "expect_rho": math.sqrt(2.0) - 1.0},
            {"name": "rigid_rational", "field": {"const": 1.0 / 3.0, "terms": []},
             "expect_class": "periodic", "expect_rho": 1.0 / 3.0},
            {"name": "rigid_03", "field": {"const": 0.3, "terms": []},
             "expect_rho": 0.3},
            {"name": "autonomous", "field": {"const": 1.0, "terms": [
                {"coeff": 0.5, "j": 0, "m": 1, "trig": "cos"}]},
             "expect_rho_quadrature": True},
            {"name": "locked_half", "field": {"const": 0.52, "terms": [
                {"coeff": 0.1, "j": -1, "m": 2, "trig": "sin"}]},
             "expect_class": "periodic", "expect_rho": 0.5},
            {"name": "arnold", "field": {"const": 0.6, "terms": [
                {"coeff": 0.8 / TWO_PI, "j": 0, "m": 1, "trig": "sin"},
                {"coeff": 0.1, "j": 1, "m": 0, "trig": "sin"}]}},
        ]},
    },
}

CATALOG: dict[str, tuple[str, str]] = {
    "heat_decay": ("Heat-mode decay against exp(-(2 pi k / L)^2 t)",
                   "analytic regression for the integrator"),
    "zero_monotone": ("Zero number of random solution differences never increases",
                      "zero number is non-increasing; drops only at multiple zeros"),
    "drop_witness": ("Engineered tangency and mode mixing: every drop has a witness",
                     "drops of the zero number happen at multiple zeros"),
    "extension_equivalence_neumann": ("Direct cosine solve vs even extension to the circle",
                                      "Neumann problems embed in the periodic one"),
    "extension_equivalence_dirichlet": ("Direct sine solve vs odd extension to the circle",
                                        "Dirichlet problems embed in the periodic one"),
    "shift_constancy": ("z(phi - sigma_a phi) is one constant on a near-minimal orbit",
                        "constancy property of the zero number on minimal sets"),
    "circle_reduction": ("Lifted max phase obeys c' = G at second order",
                         "flow on an inhomogeneous minimal set reduces to a circle flow"),
    "symmetric_conjugacy": ("Common critical point and injective evaluation map",
                            "even-in-u_x fields: evaluation at a critical point is a conjugacy"),
    "trichotomy_scan": ("Cluster omega-limit samples and classify the alternatives",
                        "omega-limit trichotomy: one minimal set, or connecting orbits"),
    "fink_torus": ("Rotation number of a torus flow with its derived quasi-periodic equation",
                   "torus flow example: bounded solution of x' = f(t, x + rho t) - rho"),
}


def list_scenarios() -> list[tuple[str, str, str]]:
    return [(name, desc, anchor) for name, (desc, anchor) in CATALOG.items()]


# ---------------------------------------------------------------------------
# config handling

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("forcing",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _positive(cfg: dict, path: str, allow_none: bool = False):
    section, key = path.split(".")
    v = cfg.get(section, {}).get(key)
    if v is None and allow_none:
        return
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or v <= 0:
        raise ConfigError(path, f"must be a positive number, got {v!r}")


def resolve_config(raw: dict, seed: int | None = None) -> dict:
    """Merge user overrides into the preset and validate."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    name = raw.get("scenario")
    if name not in DEFAULTS:
        raise ConfigError("scenario", f"unknown scenario {name!r}; run 'list' for the catalog")
    unknown = set(raw) - {"scenario", "seed", "forcing", "domain", "initial", "integration",
                          "analysis", "output", "plots"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level field")
    cfg = _merge({"scenario": name, "seed": 0, "plots": False, **DEFAULTS[name]},
                 {k: v for k, v in raw.items() if k != "output"})
    if seed is not None:
        cfg["seed"] = int(seed)
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    if cfg["forcing"] is not None:
        cfg["forcing"] = expand_field(cfg["forcing"])
    integ = cfg["integration"]
    for key, val in integ.items():
        if key == "dt_levels":
            if not isinstance(val, list) or len(val) < 2 or \
                    any(not isinstance(v, (int, float)) or v <= 0 for v in val):
                raise ConfigError("integration.dt_levels", "must list at least two positive steps")
        elif key != "t_start":
            _positive(cfg, f"integration.{key}")
    if "t_start" in integ and not (0 <= integ["t_start"] < integ.get("t_end", math.inf)):
        raise ConfigError("integration.t_start", "must lie in [0, t_end)")
    dom = cfg["domain"]
    if dom:
        _positive(cfg, "domain.L")
        if dom.get("bc") not in ("circle", "neumann", "dirichlet"):
            raise ConfigError("domain.bc", "must be circle, neumann or dirichlet")
        n = dom.get("n")
        ok = isinstance(n, int) and n >= 16 and (
            (n & (n - 1)) == 0 if dom["bc"] == "circle" else ((n - 1) & (n - 2)) == 0)
        if not ok:
            raise ConfigError("domain.n", "circle grids need a power of two >= 16, "
                                          "interval grids 2^m + 1 >= 17")
    return cfg


def load_config(path, seed: int | None = None) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}", f"invalid JSON: {exc.msg}") from exc
    return resolve_config(raw, seed)


# ---------------------------------------------------------------------------
# runners

def _heat_decay(cfg, out: Path, rng) -> ScenarioResult:
    res = ScenarioResult("heat_decay")
    dom, integ, an = cfg["domain"], cfg["integration"], cfg["analysis"]
    field = make_field(cfg["forcing"])
    L, n, k = dom["L"], dom["n"], int(an["mode"])
    u0 = make_profile(cfg["initial"], n, L)
    snaps = integrate(u0, BasePoint.zeros(field.k), field, integ["t_end"], integ["dt"],
                      integ["sample_every"])
    kappa = (TWO_PI * k / L) ** 2
    spec0 = np.fft.rfft(u0.values)
    rates = (TWO_PI * np.arange(spec0.size) / L) ** 2
    rows = []
    amp0 = None
    worst = 0.0
    for s in snaps:
        amp = 2.0 * abs(np.fft.rfft(s.profile.values)[k]) / n
        amp0 = amp if amp0 is None else amp0
        exact = amp0 * math.exp(-kappa * s.t)
        rows.append((s.t, amp, exact))
        exact_profile = np.fft.irfft(spec0 * np.exp(-rates * s.t), n)
        worst = max(worst, float(np.max(np.abs(s.profile.values - exact_profile))))
    T = snaps[-1].t
    rate = -math.log(rows[-1][1] / amp0) / T
    _csv(out / "decay.csv", ["t", "amplitude", "exact"], rows)
    write_snapshots_csv(out / "snapshots.csv", snaps)
    res.check("decay_rate", abs(rate - kappa) < an["rate_tol"],
              f"measured {rate:.10g}, expected {kappa:.10g}, tol {an['rate_tol']}")
    res.check("max_error", worst < an["error_tol"], f"{_g(worst)} < {an['error_tol']}")
    res.info["measured_rate"] = repr(rate)
    res.info["profiles"] = snaps
    return res


def _zero_monotone(cfg, out: Path, rng) -> ScenarioResult:
    res = ScenarioResult("zero_monotone")
    dom, integ, an = cfg["domain"], cfg["integration"], cfg["analysis"]
    field = make_field(cfg["forcing"])
    audits = sturm_pairs(field, dom["L"], dom["n"], int(an["pairs"]), rng,
                         integ["t_start"], integ["t_end"], integ["dt"],
                         int(integ["sample_every"]), int(cfg["initial"]["random_modes"]),
                         int(an["refine_factor"]), an["tail_fraction"])
    rows, drops = [], []
    increases = anomalies = tail_bad = 0
    for p, (series, audit) in enumerate(audits):
        rows.extend((p, r.t, r.count) for r in series)
        drops.extend(audit.drops)
        increases += len(audit.increases)
        anomalies += len(audit.anomalies)
        tail_bad += not (audit.tail_constant and audit.tail_simple)
    _csv(out / "counts.csv", ["pair", "t", "count"], rows)
    zn.write_drop_log(out / "drops.csv", drops)
    res.check("monotone", increases == 0, f"{increases} increases over {len(audits)} pairs")
    res.check("drops_witnessed", anomalies == 0, f"{anomalies} of {len(drops)} drops unwitnessed")
    res.check("tail_constant_simple", tail_bad == 0, f"{tail_bad} pairs with unsettled tails")
    return res


def _drop_witness(cfg, out: Path, rng) -> ScenarioResult:
    res = ScenarioResult("drop_witness")
    dom, integ, an, ini = cfg["domain"], cfg["integration"], cfg["analysis"], cfg["initial"]
    field = make_field(cfg["forcing"])
    L, n = dom["L"], dom["n"]
    base = BasePoint.zeros(field.k)
    delta = float(ini["collision_offset"])

    def events(u0, t_end, dt):
        zero = u0.with_values(np.zeros(n))
        o1 = integrate(u0, base, field, t_end, dt, integ["sample_every"])
        o2 = integrate(zero, base, field, t_end, dt, integ["sample_every"])
        series = zn.track_difference(o1, o2)
        refine = zn.difference_refiner(o1, o2, field, dt, factor=int(an["refine_factor"]))
        return series, zn.detect_drop_events(series, refine)

    collide = GridFunction.from_function(lambda x: np.cos(TWO_PI * x / L) + 1.0 - delta, n, L)
    mixing = make_profile(ini["mode_mixing"], n, L)
    t_star = -math.log(1.0 - delta)
    all_events = []
    for label, u0, t_end in (("collision", collide, integ["t_end_collision"]),
                             ("mode_mixing", mixing, integ["t_end_mixing"])):
        series, ev = events(u0, t_end, integ["dt"])
        _, ev_fine = events(u0, t_end, integ["dt"] / an["check_factor"])
        all_events.extend(ev)
        _csv(out / f"{label}_counts.csv", ["t", "count"], [(r.t, r.count) for r in series])
        witnessed = all(not e.anomaly for e in ev)
        res.check(f"{label}.witnessed", witnessed and ev,
                  f"{len(ev)} drops, {sum(e.anomaly for e in ev)} without witness")
        res.check(f"{label}.stable_under_refinement",
                  [(e.before, e.after) for e in ev] == [(e.before, e.after) for e in ev_fine],
                  f"{[(e.before, e.after) for e in ev]} vs {[(e.before, e.after) for e in ev_fine]}")
        if label == "collision":
            ok = len(ev) == 1 and (ev[0].before, ev[0].after) == (2, 0)
            res.check("collision.drop_2_to_0", ok, f"{[(e.before, e.after) for e in ev]}")
            if ev:
                e = ev[0]
                gap = min(abs(e.witness_x - L / 2), L - abs(e.witness_x - L / 2))
                res.check("collision.witness_location", gap < an["witness_tol"],
                          f"witness {e.witness_x:.6g}, expected {L / 2:.6g}")
                res.check("collision.bracket", e.t_lo <= t_star <= e.t_hi,
                          f"t* = {t_star:.6g} in [{e.t_lo:.6g}, {e.t_hi:.6g}]")
        else:
            res.check("mode_mixing.6_to_2", series[0].count == 6 and series[-1].count == 2,
                      f"{series[0].count} -> {series[-1].count}")
    zn.write_drop_log(out / "drops.csv", all_events)
    return res


def _extension(cfg, out: Path, rng, bc: str) -> ScenarioResult:
    res = ScenarioResult(f"extension_equivalence_{bc}")
    dom, integ, an, ini = cfg["domain"], cfg["integration"], cfg["analysis"], cfg["initial"]
    if dom["bc"] != bc:
        raise ConfigError("domain.bc", f"this scenario needs bc = {bc}")
    field = make_field(cfg["forcing"])
    rows = []
    for case in range(int(ini["cases"])):
        spec = random_trig(rng, int(ini["random_modes"]), bc)
        u0 = make_profile(spec, dom["n"], dom["L"], bc)
        base = BasePoint(tuple(rng.random(field.k)))
        direct = solve_interval(u0, base, field, bc, integ["t_end"], integ["dt"],
                                sample_every=10 ** 9)[-1]
        ext = solve_by_extension(u0, base, field, integ["t_end"], integ["dt"],
                                 sample_every=10 ** 9)[-1]
        rows.append((case, float(np.max(np.abs(direct.profile.values - ext.profile.values)))))
    _csv(out / "discrepancy.csv", ["case", "discrepancy"], rows)
    worst = max(d for _, d in rows)
    res.check("max_discrepancy", worst < an["tol"], f"{_g(worst)} < {an['tol']}")
    return res


def near_minimal_sample(field, u0, an, integ):
    sample = sp.collect_omega_sample(u0, BasePoint.zeros(field.k), field, integ["t_max"],
                                     an["delta_base"], an["transient_discard"], integ["dt"])
    clustering = sp.cluster_modulo_shift(sample, an.get("eps_cluster"))
    report = sp.classify_trichotomy(clustering, field, an["recheck_horizon"], u0=u0,
                                    base=BasePoint.zeros(field.k))
    return sample, clustering, report


def _shift_constancy(cfg, out: Path, rng) -> ScenarioResult:
    res = ScenarioResult("shift_constancy")
    dom, integ, an = cfg["domain"], cfg["integration"], cfg["analysis"]
    field = make_field(cfg["forcing"])
    u0 = make_profile(cfg["initial"], dom["n"], dom["L"])
    sample, clustering, report = near_minimal_sample(field, u0, an, integ)
    sp.write_cluster_table(out / "clusters.csv", clustering.clusters)
    sp.write_report(out / "report.txt", report)
    best = max((c.score for c in clustering.clusters), default=0.0)
    res.check("near_minimal", report.alternative == "single_minimal" and best >= an["high_score"],
              f"{report.alternative}, best score {best:.3g}")
    every = max(1, round(integ["sample_dt"] / integ["dt"]))
    snaps = integrate(u0, BasePoint.zeros(field.k), field, integ["t_max"], integ["dt"], every)
    snaps = [s for s in snaps if s.t >= an["transient_discard"]]
    rows = shift_constancy_counts(snaps, int(an["shifts"]), an["tol"])
    _csv(out / "constancy.csv", ["t", "a", "count"], [(t, a, c) for t, a, c, _ in rows])
    counts = {c for _, _, c, _ in rows}
    unresolved = sum(u for *_, u in rows)
    res.check("constant_zero_number", len(counts) == 1 and not unresolved,
              f"counts {sorted(counts)}, {unresolved} unresolved, {len(rows)} differences")
    res.info["N"] = sorted(counts)
    return res


def _circle_reduction(cfg, out: Path, rng) -> ScenarioResult:
    res = ScenarioResult("circle_reduction")
    dom, integ, an = cfg["domain"], cfg["integration"], cfg["analysis"]
    field = make_field(cfg["forcing"])
    u0 = make_profile(cfg["initial"], dom["n"], dom["L"])
    base = BasePoint.zeros(field.k)
    lo, hi = an["window"]
    coarse = max(integ["dt_levels"])
    maxima, finest = [], None
    for dt in integ["dt_levels"]:
        snaps = integrate(u0, base, field, integ["t_end"], dt, 1)
        check = cr.verify_reduction(snaps, field)
        # compare on the coarsest grid so every level is measured at the same times
        stride = round(coarse / dt)
        t = check.times
        mask = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        mask &= (np.arange(t.size) % stride) == 0
        maxima.append(float(np.nanmax(check.residual[mask])))
        finest = check
    _csv(out / "convergence.csv", ["dt", "max_residual"], list(zip(integ["dt_levels"], maxima)))
    cr.write_residuals(out / "residuals.csv", finest)
    res.check("coarse_residual", maxima[0] < an["max_residual"],
              f"{_g(maxima[0])} < {an['max_residual']} at dt {integ['dt_levels'][0]}")
    for i in range(1, len(maxima)):
        factor = maxima[i - 1] / maxima[i]
        res.check(f"halving_{i}", factor >= an["min_factor"],
                  f"residual ratio {factor:.4g} >= {an['min_factor']}")
    G = finest.G
    try:
        ap = almost_period_scan(G, an["ap_eps"], finest.times[1] - finest.times[0])
        res.info["G_almost_periods"] = f"{ap.lags.size} lags, relatively dense: {ap.relatively_dense}"
    except ValueError as exc:
        res.info["G_almost_periods"] = f"not computed ({exc})"
    res.info["finest"] = finest
    return res


def _symmetric_conjugacy(cfg, out: Path, rng) -> ScenarioResult:
    res = ScenarioResult("symmetric_conjugacy")
    dom, integ, an = cfg["domain"], cfg["integration"], cfg["analysis"]
    field = make_field(cfg["forcing"])
    if not field.even_in_p:
        raise ConfigError("forcing", "symmetric_conjugacy needs a field declared even in u_x")
    snaps, rows = [], []
    for i, spec in enumerate(cfg["initial"]["trajectories"]):
        u0 = make_profile(spec, dom["n"], dom["L"], path=f"initial.trajectories[{i}]")
        sample = sp.collect_omega_sample(u0, BasePoint.zeros(field.k), field, integ["t_max"],
                                         an["delta_base"], an["transient_discard"], integ["dt"])
        snaps.extend(sample.snapshots)
        rows.extend((s.t, i) for s in sample.snapshots)
    x0, resid = cr.find_common_critical_point(snaps)
    amp = max(float(np.max(np.abs(s.profile.values))) for s in snaps)
    rep = cr.evaluation_conjugacy_check(snaps, x0, an["base_tol"], an["same_tol"], an["sep_tol"])
    vals = [TrigInterpolant(s.profile.values, s.profile.L)(x0) for s in snaps]
    _csv(out / "evaluation.csv", ["t", "trajectory", "u_x0"],
         [(t, i, float(v)) for (t, i), v in zip(rows, vals)])
    _csv(out / "critical_point.csv", ["x0", "residual", "mu", "pairs", "violations"],
         [(x0, resid, rep.mu, rep.n_pairs, len(rep.violations))])
    res.check("common_critical_point", resid < an["residual_rel"] * amp,
              f"x0 = {x0:.6g}, residual {_g(resid)} < {_g(an['residual_rel'] * amp)}")
    res.check("evaluation_injective", rep.injective,
              f"{len(rep.violations)} violations over {rep.n_pairs} pairs, mu = {_g(rep.mu)}")
    return res


def _trichotomy_scan(cfg, out: Path, rng) -> ScenarioResult:
    res = ScenarioResult("trichotomy_scan")
    dom, integ, an = cfg["domain"], cfg["integration"], cfg["analysis"]
    for case in an["cases"]:
        name = case["name"]
        field = make_field(case.get("forcing", cfg["forcing"]))
        u0 = make_profile(case["initial"], dom["n"], dom["L"], path=f"analysis.cases.{name}")
        opts = {"delta_base": an["delta_base"], "transient_discard": case["transient_discard"],
                "eps_cluster": case.get("eps_cluster"), "recheck_horizon": an["recheck_horizon"]}
        sample, clustering, report = near_minimal_sample(
            field, u0, opts, {"t_max": case["t_max"], "dt": integ["dt"]})
        sp.write_cluster_table(out / f"{name}_clusters.csv", clustering.clusters)
        sp.write_report(out / f"{name}_report.txt", report)
        expect = case.get("expect")
        if expect:
            res.check(f"{name}.alternative", report.alternative in expect,
                      f"{report.alternative} in {expect}")
        res.check(f"{name}.no_red_flag", not report.red_flag,
                  f"{len(report.high_clusters)} high-score clusters")
        res.info[f"{name}.alternative"] = report.alternative
    return res


def _fink_torus(cfg, out: Path, rng) -> ScenarioResult:
    res = ScenarioResult("fink_torus")
    integ, an = cfg["integration"], cfg["analysis"]
    n_it, dt = int(integ["n_iterates"]), integ["dt"]
    eta = float(cfg["initial"]["eta"])
    for case in an["cases"]:
        name = case["name"]
        vf = tx.TorusVectorField.from_dict(case["field"])
        table = tx.PoincareTable(vf, dt=dt)
        rot = tx.rotation_number(vf, eta, n_it, table=table)
        tx.write_rotation_table(out / f"{name}_rotation.csv", rot.table)
        om = tx.omega_limit_circle(vf, eta, n_it, table=table)
        tx.write_iterates(out / f"{name}_iterates.csv", om.points)
        res.info.setdefault("iterates", {})[name] = om.points
        res.info[f"{name}.rho"] = repr(rot.rho)
        res.info[f"{name}.class"] = om.classification
        if "expect_rho" in case:
            res.check(f"{name}.rho", abs(rot.rho - case["expect_rho"]) < 1e-12
                      if vf.x_independent else abs(rot.rho - case["expect_rho"]) < 1e-9,
                      f"{rot.rho!r} vs {case['expect_rho']!r}")
        if case.get("expect_rho_quadrature"):
            period, _ = quad(lambda x: 1.0 / vf(0.0, x), 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)
            target = 1.0 / period
            err = abs(rot.rho - target)
            res.check(f"{name}.rho_quadrature", err < 2.0 / n_it,
                      f"|rho_n - {target:.10g}| = {_g(err)} < {_g(2.0 / n_it)}")
        if "expect_class" in case:
            res.check(f"{name}.class", om.classification == case["expect_class"],
                      f"{om.classification} (expected {case['expect_class']})")
        if vf.x_independent and not vf.terms:
            eq = tx.derived_equation(vf, rot.rho)
            t, x = eq.integrate(eta, 10.0, dt)
            res.check(f"{name}.derived_constant", np.all(x == eta),
                      f"max |x(t) - x(0)| = {_g(float(np.max(np.abs(x - eta))))}")
        else:
            mon = tx.derived_equation(vf, rot.rho).monitor(eta, integ["monitor_t"], table=table)
            _csv(out / f"{name}_deviation.csv", ["T", "sup_deviation"], mon.table)
            res.info[f"{name}.derived_bound"] = repr(mon.bound)
    return res


RUNNERS: dict[str, Callable] = {
    "heat_decay": _heat_decay,
    "zero_monotone": _zero_monotone,
    "drop_witness": _drop_witness,
    "extension_equivalence_neumann": lambda c, o, r: _extension(c, o, r, "neumann"),
    "extension_equivalence_dirichlet": lambda c, o, r: _extension(c, o, r, "dirichlet"),
    "shift_constancy": _shift_constancy,
    "circle_reduction": _circle_reduction,
    "symmetric_conjugacy": _symmetric_conjugacy,
    "trichotomy_scan": _trichotomy_scan,
    "fink_torus": _fink_torus,
}


def _plain(value) -> bool:
    """True for scalars and flat lists of scalars, the values a summary line can carry."""
    scalar = (str, int, float, np.integer, np.floating)
    if isinstance(value, scalar):
        return True
    return isinstance(value, (list, tuple)) and all(isinstance(v, scalar) for v in value)


def run_scenario(cfg: dict, out_dir) -> ScenarioResult:
    """Run a resolved config, writing the config echo and all artifacts into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rng = np.random.default_rng(cfg["seed"])
    result = RUNNERS[cfg["scenario"]](cfg, out, rng)
    if cfg.get("plots"):
        from .plots import plot_result
        plot_result(result, out)
    result.info = {k: v for k, v in result.info.items() if _plain(v)}
    (out / "summary.txt").write_text(result.summary_text())
    return result
