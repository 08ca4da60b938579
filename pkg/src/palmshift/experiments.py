"""Declarative experiment runner behind the command line interface.

An experiment is a flat key-value document (dotted keys) naming one of
ten kinds; each kind maps onto exactly one verification operation of
the library and fills in sensible per-model defaults for anything the
config omits.  Reports carry per-statistic estimates, standard errors
and verdicts, all deterministic functions of (spec, seed): replication
streams are indexed globally, so splitting the work across processes
cannot change a single bit of the output.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import groups, networks, sampling, shift_graph, shifts, transport
from .groups import Box, GroupModel
from .networks import RootedNetwork
from .sampling import PointConfiguration, ProcessSpec, RngStream
from .shifts import PointShiftSpec
from .transport import MeckeReport, TransportReport

EXPERIMENT_KINDS = (
    "sample",
    "mass-transport",
    "mass-flow",
    "mecke",
    "reciprocal-reverse",
    "dual-palm",
    "classify",
    "strip-counterexample",
    "embed-roundtrip",
    "unimodularity",
)

PASS = "pass"
FAIL = "fail"
INFO = "info"

# Geometric bound on the expected total strip occupancy along the orbit
# of the typical point: sum over k >= 1 of (2*delta*intensity)^k.
def strip_occupancy_bound(delta: float, intensity: float) -> float:
    rho = 2.0 * delta * intensity
    if rho >= 1.0:
        raise ValueError("occupancy bound needs 2*delta*intensity < 1")
    return rho / (1.0 - rho)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    params: tuple[tuple[str, str], ...]

    @classmethod
    def from_dict(cls, kind: str, params: dict[str, str]) -> "ExperimentSpec":
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(
                f"unknown experiment kind {kind!r}; expected one of {', '.join(EXPERIMENT_KINDS)}"
            )
        return cls(kind, tuple(sorted(params.items())))

    def as_dict(self) -> dict[str, str]:
        return dict(self.params)


@dataclass
class StatRecord:
    name: str
    estimate: float
    se: float
    verdict: str


@dataclass
class ReportRecord:
    kind: str
    params: dict[str, str]
    statistics: list[StatRecord]
    censoring: dict[str, int]
    seed: int
    duration_s: float = 0.0

    def to_dict(self) -> dict:
        # wall-clock duration is intentionally not part of the emitted
        # record: emitted bytes are a pure function of (spec, seed)
        return {
            "experiment": {"kind": self.kind, **dict(sorted(self.params.items()))},
            "seed": self.seed,
            "statistics": [
                {"name": s.name, "estimate": s.estimate, "se": s.se, "verdict": s.verdict}
                for s in self.statistics
            ],
            "censoring": dict(sorted(self.censoring.items())),
        }

    @property
    def all_ok(self) -> bool:
        return all(s.verdict not in ("inconsistent", FAIL) for s in self.statistics)


# ---------------------------------------------------------------------------
# Parameter resolution


def _get_float(params: dict[str, str], key: str, default: float) -> float:
    raw = params.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key} expects a number, got {raw!r}") from exc


def _get_int(params: dict[str, str], key: str, default: int) -> int:
    raw = params.get(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key} expects an integer, got {raw!r}") from exc


def _get_vector(params: dict[str, str], key: str) -> tuple[float, ...] | None:
    raw = params.get(key)
    if raw is None:
        return None
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"key {key} expects comma-separated numbers, got {raw!r}") from exc


def _resolve_model(params: dict[str, str]) -> GroupModel:
    name = params.get("model", "euclidean")
    dim = _get_int(params, "model.dim", 2 if name in ("torus", "ax_b") else 1)
    if name == "euclidean":
        return groups.euclidean(dim)
    if name == "torus":
        return groups.torus(dim)
    if name == "ax_b":
        return groups.ax_b()
    raise ConfigError(f"unknown model {name!r}; expected euclidean, ax_b or torus")


def _resolve_process(params: dict[str, str], default_intensity: float) -> ProcessSpec:
    name = params.get("process", "poisson")
    if name == "poisson":
        return sampling.poisson(_get_float(params, "process.intensity", default_intensity))
    if name == "lattice":
        return sampling.lattice(_get_float(params, "process.spacing", 1.0))
    raise ConfigError(f"unknown process {name!r}; expected poisson or lattice")


def _resolve_shift(params: dict[str, str], model: GroupModel, default: str) -> PointShiftSpec:
    name = params.get("shift", default)
    if name == "strip":
        spec = shifts.strip_shift(
            _get_float(params, "shift.delta", 0.1),
            _get_float(params, "shift.a_max_ratio", 100.0),
        )
    elif name == "right_neighbor":
        spec = shifts.right_neighbor()
    elif name == "nearest_neighbor":
        spec = shifts.nearest_neighbor()
    elif name == "identity":
        spec = shifts.identity_shift()
    else:
        raise ConfigError(f"unknown shift {name!r}")
    try:
        shifts.validate_shift_model(spec, model)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return spec


def _resolve_window(params: dict[str, str], model: GroupModel, default: Box, prefix: str = "window") -> Box:
    lo = _get_vector(params, f"{prefix}.lo")
    hi = _get_vector(params, f"{prefix}.hi")
    if lo is None and hi is None:
        return default
    if lo is None or hi is None:
        raise ConfigError(f"{prefix}.lo and {prefix}.hi must be given together")
    if len(lo) != model.dim or len(hi) != model.dim:
        raise ConfigError(
            f"{prefix} bounds need {model.dim} coordinates for model {model.kind}"
        )
    try:
        window = Box(lo, hi)
        groups.haar_mass(model, window)
    except (ValueError, groups.InfiniteMassError) as exc:
        raise ConfigError(f"invalid {prefix}: {exc}") from exc
    return window


def _default_window(kind: str, model: GroupModel, shift: PointShiftSpec | None, params) -> Box:
    if model.kind == groups.TORUS:
        return groups.full_torus(model.dim)
    if model.kind == groups.EUCLIDEAN:
        side = {
            "sample": (0.0, 5.0),
            "dual-palm": (-10.0, 10.0),
            "embed-roundtrip": (-8.0, 8.0),
            "unimodularity": (-15.0, 15.0),
        }.get(kind, (-25.0, 25.0))
        return Box((side[0],) * model.dim, (side[1],) * model.dim)
    # ax_b windows sized for the strip geometry of each experiment; the
    # infinite a-extent is cheap because the Haar mass stays finite.
    delta = shift.delta if shift is not None and shift.kind == shifts.STRIP else 0.1
    ratio = shift.a_max_ratio if shift is not None and shift.kind == shifts.STRIP else 100.0
    if kind in ("mass-flow", "mass-transport"):
        if not math.isfinite(ratio):
            raise ConfigError(
                "mass-flow on the strip shift needs a finite shift.a_max_ratio "
                "(preimages of an untruncated strip reach arbitrarily far down)"
            )
        return Box((1.0 / ratio, -2.0 * delta), (math.inf, 2.0 * delta))
    if kind == "mecke":
        return Box((0.2, -6.0), (math.inf, 6.0))
    if kind == "strip-counterexample":
        return Box((1.0, -60.0), (math.inf, 60.0))
    if kind == "dual-palm":
        return Box((0.45, -0.75), (math.inf, 0.75))
    if kind in ("embed-roundtrip", "unimodularity"):
        return Box((0.25, -2.0), (4.0, 2.0))
    return Box((0.5, 0.0), (math.inf, 5.0))


def _default_shift_name(model: GroupModel) -> str:
    if model.kind == groups.AX_B:
        return "strip"
    if model.kind == groups.TORUS:
        return "nearest_neighbor"
    return "right_neighbor" if model.dim == 1 else "nearest_neighbor"


# ---------------------------------------------------------------------------
# Blocked parallel execution of library operations

_OPS = {
    "verify_mass_transport": transport.verify_mass_transport,
    "mass_flow_check": transport.mass_flow_check,
    "mecke_invariance_test": transport.mecke_invariance_test,
    "reciprocal_vs_reverse_test": transport.reciprocal_vs_reverse_test,
    "dual_palm_consistency": transport.dual_palm_consistency,
    "unimodularity_check": networks.unimodularity_check,
}


def _op_block(op_name: str, kwargs: dict, count: int, rng: RngStream):
    return _OPS[op_name](n_samples=count, rng=rng, **kwargs)


def _block_ranges(n: int, threads: int) -> list[tuple[int, int]]:
    chunks = max(1, min(threads, n))
    bounds = np.linspace(0, n, chunks + 1, dtype=int)
    return [(int(a), int(b - a)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_op(op_name: str, n: int, rng: RngStream, threads: int, **kwargs):
    merge = {"mecke_invariance_test": MeckeReport, "reciprocal_vs_reverse_test": MeckeReport}.get(
        op_name, TransportReport
    )
    ranges = _block_ranges(n, threads)
    if len(ranges) <= 1:
        return _op_block(op_name, kwargs, n, rng)
    tasks = [(op_name, kwargs, count, rng.shifted(start)) for start, count in ranges]
    with ProcessPoolExecutor(max_workers=len(ranges)) as pool:
        parts = list(pool.map(_op_block_star, tasks))
    return merge.merge(parts)


def _op_block_star(task):
    return _op_block(*task)


# ---------------------------------------------------------------------------
# Named network ensembles and vertex-pair mass functions


@dataclass(frozen=True)
class NetworkEnsemble:
    """Palm-rooted network sampler, picklable for worker processes."""

    process: ProcessSpec
    model: GroupModel
    window: Box
    rule: str
    shift: PointShiftSpec | None = None

    def __call__(self, rng: RngStream) -> RootedNetwork:
        config = sampling.palm_sample_slivnyak(self.process, self.model, self.window, rng)
        return networks.network_from_config(config, self.rule, self.shift)


@dataclass(frozen=True)
class VertexPairMass:
    """Named g(network, x, y) rules with bounded graph-distance support."""

    kind: str  # "out_edge" | "degree_normalized" | "adjacency"

    def __call__(self, net: RootedNetwork, x: int, y: int) -> float:
        if self.kind == "out_edge":
            out = net.directed_out or {}
            return 1.0 if out.get(x) == y else 0.0
        if self.kind == "adjacency":
            return 1.0 if net.adjacent(x, y) else 0.0
        if self.kind == "degree_normalized":
            return 1.0 / net.degree(x) if net.adjacent(x, y) else 0.0
        raise ConfigError(f"unknown network mass rule {self.kind!r}")


# ---------------------------------------------------------------------------
# Mergeable bundles for the non-transport experiment loops


@dataclass
class ArrayBundle:
    arrays: dict[str, np.ndarray]
    counts: dict[str, int]

    @classmethod
    def merge(cls, parts: list["ArrayBundle"]) -> "ArrayBundle":
        arrays = {
            k: np.concatenate([p.arrays[k] for p in parts]) for k in parts[0].arrays
        }
        counts = {
            k: sum(p.counts[k] for p in parts) for k in parts[0].counts
        }
        return cls(arrays, counts)


def _sample_block(process, model, window, count: int, rng: RngStream) -> ArrayBundle:
    counts = np.empty(count)
    ties = 0
    for i in range(count):
        config = sampling.sample(process, model, window, rng.shifted(i))
        counts[i] = config.n
        ties += len(sampling.separation_check(config, lambda pts: pts[:, 0]))
    return ArrayBundle({"count": counts}, {"tie_pairs": ties})


def _classify_block(shift, process, model, window, count: int, rng: RngStream) -> ArrayBundle:
    ff = censored = violations = total = 0
    cycle_foil_mismatch = 0
    for i in range(count):
        config = sampling.sample(process, model, window, rng.shifted(i))
        graph = shift_graph.build_graph(shift, config)
        try:
            records = shift_graph.components(graph)
        except RuntimeError:
            violations += 1
            continue
        for rec in records:
            total += 1
            if rec.klass == shift_graph.CLASS_FF:
                ff += 1
                if len(rec.foils) != len(rec.cycle) or set(rec.primeval) != set(rec.cycle):
                    cycle_foil_mismatch += 1
            else:
                censored += 1
    return ArrayBundle(
        {},
        {
            "components": total,
            "ff_components": ff,
            "censored_components": censored,
            "violations": violations + cycle_foil_mismatch,
        },
    )


def _strip_orbit_block(shift, process, model, window, max_steps, count, rng) -> ArrayBundle:
    occupancy = []
    stabilized = np.zeros(count)
    censored = 0
    for i in range(count):
        config = sampling.palm_sample_slivnyak(process, model, window, rng.shifted(i))
        stats = shift_graph.strip_fixed_point_stats(shift, config, max_steps=max_steps)
        if stats.censored:
            censored += 1
            continue
        occupancy.append(stats.strip_occupancy_sum)
        stabilized[i] = 1.0 if (stats.stabilized and stats.steps <= max_steps) else 0.0
    return ArrayBundle(
        {"occupancy": np.asarray(occupancy), "stabilized": stabilized},
        {"orbit_censored": censored},
    )


def _strip_preimage_block(delta, a_mins, process, model, window, count, rng) -> ArrayBundle:
    """Preimage counts of fixed points inside the truncated parallelogram.

    The sampling window is unbounded in the a-direction, so fixedness of
    the identity (no configuration point strictly to the right inside
    its strip) and the image of every counted preimage are decided by
    the full untruncated strips: no truncation error enters.
    """
    rows = []
    not_fixed = 0
    verify_failures = 0
    for i in range(count):
        config = sampling.palm_sample_slivnyak(process, model, window, rng.shifted(i))
        pts = config.points
        a, b = pts[:, 0], pts[:, 1]
        right = (a > 1.0) & (np.abs(b) <= delta)
        if np.any(right):
            not_fixed += 1
            continue
        row = np.empty(len(a_mins))
        for k, t in enumerate(a_mins):
            inside = groups.contains_points(model, groups.ParallelogramD(delta, t), pts)
            inside[config.identity_index()] = False
            row[k] = float(np.count_nonzero(inside))
        rows.append(row)
        # direct check on the deepest truncation: each counted point has
        # the identity as the right-most point of its own strip
        deep = groups.contains_points(model, groups.ParallelogramD(delta, a_mins[-1]), pts)
        deep[config.identity_index()] = False
        for j in np.where(deep)[0]:
            members = (a >= a[j]) & (np.abs(b - b[j]) <= delta * a[j])
            rightmost = np.argmax(np.where(members, a, -np.inf))
            if int(rightmost) != config.identity_index():
                verify_failures += 1
    rows_arr = np.asarray(rows).reshape(-1, len(a_mins))
    return ArrayBundle(
        {"decade_counts": rows_arr},
        {"not_fixed": not_fixed, "preimage_verify_failures": verify_failures},
    )


def _embed_block(rule, shift, process, model, window, count, rng) -> ArrayBundle:
    roundtrip = np.empty(count)
    rebase = np.empty(count)
    collapses = 0
    for i in range(count):
        config = sampling.palm_sample_slivnyak(process, model, window, rng.shifted(i))
        net = networks.network_from_config(config, rule, shift)
        recon = networks.reconstruct(net)
        if recon.n != config.n:
            collapses += 1
            roundtrip[i] = math.inf
            rebase[i] = math.inf
            continue
        roundtrip[i] = _coord_error(model, recon.points, config.points)
        v = i % config.n
        recon2 = networks.reconstruct(net.rerooted(v))
        expected = model.multiply(model.invert(recon.points[v]), recon.points)
        rebase[i] = _coord_error(model, recon2.points, expected)
    return ArrayBundle(
        {"roundtrip": roundtrip, "rebase": rebase}, {"collapses": collapses}
    )


def _coord_error(model: GroupModel, a: np.ndarray, b: np.ndarray) -> float:
    diff = np.abs(a - b)
    if model.kind == groups.TORUS:
        diff = np.minimum(diff, 1.0 - diff)
    return float(np.max(diff)) if diff.size else 0.0


_BUNDLE_OPS = {
    "sample": _sample_block,
    "classify": _classify_block,
    "strip_orbit": _strip_orbit_block,
    "strip_preimage": _strip_preimage_block,
    "embed": _embed_block,
}


def _bundle_block_star(task):
    name, args, count, rng = task
    return _BUNDLE_OPS[name](*args, count, rng)


def _run_bundle(name: str, args: tuple, n: int, rng: RngStream, threads: int) -> ArrayBundle:
    ranges = _block_ranges(n, threads)
    if len(ranges) <= 1:
        return _BUNDLE_OPS[name](*args, n, rng)
    tasks = [(name, args, count, rng.shifted(start)) for start, count in ranges]
    with ProcessPoolExecutor(max_workers=len(ranges)) as pool:
        parts = list(pool.map(_bundle_block_star, tasks))
    return ArrayBundle.merge(parts)


# ---------------------------------------------------------------------------
# Statistic assembly


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    return transport._mean_se(values)


def _transport_stats(report: TransportReport) -> list[StatRecord]:
    combined = math.hypot(report.lhs_se, report.rhs_se)
    return [
        StatRecord(f"lhs:{report.lhs_name}", report.lhs_mean, report.lhs_se, INFO),
        StatRecord(f"rhs:{report.rhs_name}", report.rhs_mean, report.rhs_se, INFO),
        StatRecord(
            "difference",
            report.lhs_mean - report.rhs_mean,
            combined,
            report.verdict,
        ),
    ]


def _transport_censoring(report: TransportReport) -> dict[str, int]:
    return {
        "lhs_discarded": report.lhs_discarded,
        "rhs_discarded": report.rhs_discarded,
    }


def _mecke_stats(report: MeckeReport, expect_invariance: bool | None = None) -> list[StatRecord]:
    records = []
    for stat in report.statistics:
        combined = math.hypot(stat.palm_se, stat.shifted_se)
        verdict = "consistent" if stat.consistent else "inconsistent"
        records.append(
            StatRecord(
                f"{stat.name}:difference",
                stat.shifted_mean - stat.palm_mean,
                combined,
                verdict,
            )
        )
        p = stat.ks_pvalue
        records.append(
            StatRecord(
                f"{stat.name}:ks_pvalue",
                p,
                0.0,
                INFO if math.isnan(p) else (PASS if p > transport.KS_THRESHOLD else FAIL),
            )
        )
    if report.exact_match is not None:
        records.append(
            StatRecord(
                "exact_match",
                1.0 if report.exact_match else 0.0,
                0.0,
                PASS if report.exact_match else FAIL,
            )
        )
    return records


# ---------------------------------------------------------------------------
# Experiment implementations


def _run_sample(spec, params, n, seed, threads, rng):
    model = _resolve_model(params)
    process = _resolve_process(params, 2.0 if model.kind == groups.EUCLIDEAN else 1.0)
    window = _resolve_window(params, model, _default_window("sample", model, None, params))
    bundle = _run_bundle("sample", (process, model, window), n, rng, threads)
    mean, se = _mean_se(bundle.arrays["count"])
    expected = process.intensity * groups.haar_mass(model, window)
    verdict = (
        "consistent" if abs(mean - expected) <= 3.0 * max(se, 1e-300) else "inconsistent"
    )
    ties = bundle.counts["tie_pairs"]
    stats = [
        StatRecord("count_mean", mean, se, verdict),
        StatRecord("count_expected", expected, 0.0, INFO),
        StatRecord("first_coordinate_tie_pairs", float(ties), 0.0, PASS if ties == 0 else FAIL),
    ]
    return stats, {}


def _run_mass_transport(spec, params, n, seed, threads, rng):
    model = _resolve_model(params)
    process = _resolve_process(params, 1.0)
    shift = _resolve_shift(params, model, _default_shift_name(model))
    window = _resolve_window(params, model, _default_window(spec.kind, model, shift, params))
    if spec.kind == "mass-flow":
        report = _run_op(
            "mass_flow_check", n, rng, threads,
            shift=shift, process=process, model=model, window=window,
        )
    else:
        weight = params.get("tau.weight", "inverse_modular")
        if weight not in ("unit", "inverse_modular", "zero"):
            raise ConfigError(f"unknown tau.weight {weight!r}")
        tau = transport.shift_edge_transport(shift, weight)
        report = _run_op(
            "verify_mass_transport", n, rng, threads,
            tau=tau, process=process, model=model, window=window,
        )
    return _transport_stats(report), _transport_censoring(report)


def _run_mecke(spec, params, n, seed, threads, rng):
    model = _resolve_model(params)
    process = _resolve_process(params, 1.0)
    shift = _resolve_shift(params, model, _default_shift_name(model))
    window = _resolve_window(params, model, _default_window("mecke", model, shift, params))
    report = _run_op(
        "mecke_invariance_test", n, rng, threads,
        shift=shift, process=process, model=model, window=window,
    )
    stats = _mecke_stats(report)
    return stats, {
        "palm_discarded": report.palm_discarded,
        "shifted_discarded": report.shifted_discarded,
    }


def _run_reciprocal_reverse(spec, params, n, seed, threads, rng):
    model = _resolve_model(params)
    process = _resolve_process(params, 1.0)
    shift = _resolve_shift(params, model, "right_neighbor")
    window = _resolve_window(params, model, _default_window("mecke", model, shift, params))
    report = _run_op(
        "reciprocal_vs_reverse_test", n, rng, threads,
        shift=shift, process=process, model=model, window=window,
    )
    stats = _mecke_stats(report)
    return stats, {
        "reciprocal_discarded": report.palm_discarded,
        "reverse_discarded": report.shifted_discarded,
    }


def _resolve_functional(params: dict[str, str], model: GroupModel) -> transport.PalmFunctional:
    name = params.get("functional", "unit")
    if name == "unit":
        return transport.unit_functional()
    if name == "ball_count":
        return transport.ball_count_functional(_get_float(params, "functional.radius", 1.0))
    if name == "strip_modular":
        if model.kind != groups.AX_B:
            raise ConfigError("functional strip_modular requires model = ax_b")
        shift = shifts.strip_shift(
            _get_float(params, "shift.delta", 0.1),
            _get_float(params, "shift.a_max_ratio", 100.0),
        )
        return transport.modular_jump_functional(shift)
    raise ConfigError(f"unknown functional {name!r}")


def _run_dual_palm(spec, params, n, seed, threads, rng):
    model = _resolve_model(params)
    process = _resolve_process(params, 1.0)
    functional = _resolve_functional(params, model)
    window = _resolve_window(params, model, _default_window("dual-palm", model, functional.shift, params))
    if model.kind == groups.AX_B:
        inner_default = Box((0.5, -0.5), (2.0, 0.5))
    elif model.kind == groups.TORUS:
        inner_default = groups.full_torus(model.dim)
    else:
        lo = np.asarray(window.lo) + 2.0
        hi = np.asarray(window.hi) - 2.0
        inner_default = Box(tuple(lo), tuple(hi))
    inner = _resolve_window(params, model, inner_default, prefix="inner")
    report = _run_op(
        "dual_palm_consistency", n, rng, threads,
        functional=functional, process=process, model=model, window=window, inner=inner,
    )
    return _transport_stats(report), _transport_censoring(report)


def _run_classify(spec, params, n, seed, threads, rng):
    model = _resolve_model(params)
    process = _resolve_process(params, 20.0 if model.kind == groups.TORUS else 1.0)
    shift = _resolve_shift(params, model, _default_shift_name(model))
    window = _resolve_window(params, model, _default_window("classify", model, shift, params))
    bundle = _run_bundle("classify", (shift, process, model, window), n, rng, threads)
    c = bundle.counts
    stats = [
        StatRecord("components", float(c["components"]), 0.0, INFO),
        StatRecord("ff_components", float(c["ff_components"]), 0.0, INFO),
        StatRecord("censored_components", float(c["censored_components"]), 0.0, INFO),
        StatRecord(
            "violations", float(c["violations"]), 0.0, PASS if c["violations"] == 0 else FAIL
        ),
    ]
    return stats, {"censored_components": c["censored_components"]}


def _run_strip_counterexample(spec, params, n, seed, threads, rng):
    model = _resolve_model(params)
    if model.kind != groups.AX_B:
        raise ConfigError("strip-counterexample requires model = ax_b")
    process = _resolve_process(params, 1.0)
    delta = _get_float(params, "shift.delta", 0.1)
    ratio = _get_float(params, "shift.a_max_ratio", math.inf)
    shift = shifts.strip_shift(delta, ratio)
    window = _resolve_window(params, model, _default_window("strip-counterexample", model, shift, params))
    max_steps = _get_int(params, "orbit.max_steps", 50)
    bound = strip_occupancy_bound(delta, process.intensity)

    orbit = _run_bundle(
        "strip_orbit", (shift, process, model, window, max_steps), n, rng, threads
    )
    occ_mean, occ_se = _mean_se(orbit.arrays["occupancy"])
    stab_mean, stab_se = _mean_se(orbit.arrays["stabilized"])

    n_pre = _get_int(params, "preimage.n_samples", max(2000, n // 5))
    a_mins = _get_vector(params, "preimage.a_mins") or (0.05, 0.005, 0.0005)
    pre_window = Box((min(a_mins) * 0.8, -1.2 * delta), (math.inf, 1.2 * delta))
    pre = _run_bundle(
        "strip_preimage",
        (delta, tuple(a_mins), process, model, pre_window),
        n_pre,
        rng.shifted(7 * 2**40),
        threads,
    )
    rows = pre.arrays["decade_counts"]

    stats = [
        StatRecord(
            "occupancy_mean", occ_mean, occ_se,
            PASS if occ_mean <= bound + 3.0 * occ_se else FAIL,
        ),
        StatRecord("occupancy_bound", bound, 0.0, INFO),
        StatRecord(
            "stabilized_fraction", stab_mean, stab_se,
            PASS if stab_mean >= 0.99 else FAIL,
        ),
    ]
    increment = 2.0 * delta * math.log(10.0)
    for k, t in enumerate(a_mins):
        mean_k, se_k = _mean_se(rows[:, k])
        stats.append(StatRecord(f"preimage_mean_amin_{t:g}", mean_k, se_k, INFO))
        freq = float(np.mean(rows[:, k] >= 1.0)) if rows.size else math.nan
        freq_se = math.sqrt(max(freq * (1 - freq), 1e-12) / max(rows.shape[0], 1))
        expected_freq = 1.0 - math.exp(
            -process.intensity * shift_graph.parallelogram_mass(delta, t)
        )
        stats.append(
            StatRecord(
                f"preimage_freq_amin_{t:g}", freq, freq_se,
                PASS if abs(freq - expected_freq) <= 3.0 * freq_se + 1e-12 else FAIL,
            )
        )
    for k in range(1, len(a_mins)):
        diffs = rows[:, k] - rows[:, k - 1]
        inc_mean, inc_se = _mean_se(diffs)
        ok = abs(inc_mean - increment) <= 0.1 * increment
        stats.append(
            StatRecord(f"decade_increment_{k}", inc_mean, inc_se, PASS if ok else FAIL)
        )
    stats.append(
        StatRecord(
            "preimage_verify_failures",
            float(pre.counts["preimage_verify_failures"]),
            0.0,
            PASS if pre.counts["preimage_verify_failures"] == 0 else FAIL,
        )
    )
    censoring = {
        "orbit_censored": orbit.counts["orbit_censored"],
        "not_fixed_skipped": pre.counts["not_fixed"],
    }
    return stats, censoring


def _default_graph_rule(model: GroupModel) -> str:
    if model.kind == groups.EUCLIDEAN and model.dim == 1:
        return "delaunay_1d"
    return "complete"


def _run_embed_roundtrip(spec, params, n, seed, threads, rng):
    model = _resolve_model(params)
    process = _resolve_process(params, 20.0 if model.kind == groups.TORUS else 1.0)
    rule = params.get("network.rule", _default_graph_rule(model))
    shift = None
    if rule == "shift_graph":
        shift = _resolve_shift(params, model, _default_shift_name(model))
    window = _resolve_window(params, model, _default_window("embed-roundtrip", model, shift, params))
    bundle = _run_bundle("embed", (rule, shift, process, model, window), n, rng, threads)
    rt = float(np.max(bundle.arrays["roundtrip"])) if n else 0.0
    rb = float(np.max(bundle.arrays["rebase"])) if n else 0.0
    collapses = bundle.counts["collapses"]
    stats = [
        StatRecord("max_roundtrip_error", rt, 0.0, PASS if rt <= 1e-12 else FAIL),
        StatRecord("max_rebase_error", rb, 0.0, PASS if rb <= 1e-12 else FAIL),
        StatRecord("collapses", float(collapses), 0.0, PASS if collapses == 0 else FAIL),
    ]
    return stats, {}


def _run_unimodularity(spec, params, n, seed, threads, rng):
    model = _resolve_model(params)
    process = _resolve_process(params, 10.0 if model.kind == groups.TORUS else 1.0)
    rule = params.get("network.rule", "shift_graph" if model.kind == groups.EUCLIDEAN else "complete")
    shift = None
    if rule == "shift_graph":
        shift = _resolve_shift(params, model, _default_shift_name(model))
    window = _resolve_window(params, model, _default_window("unimodularity", model, shift, params))
    g_kind = params.get("network.g", "out_edge" if rule == "shift_graph" else "degree_normalized")
    radius_raw = params.get("network.radius")
    radius = int(radius_raw) if radius_raw is not None else (2 if rule == "shift_graph" else None)
    sampler = NetworkEnsemble(process, model, window, rule, shift)
    report = _run_op(
        "unimodularity_check", n, rng, threads,
        network_sampler=sampler, g=VertexPairMass(g_kind), radius=radius,
    )
    return _transport_stats(report), _transport_censoring(report)


_RUNNERS = {
    "sample": _run_sample,
    "mass-transport": _run_mass_transport,
    "mass-flow": _run_mass_transport,
    "mecke": _run_mecke,
    "reciprocal-reverse": _run_reciprocal_reverse,
    "dual-palm": _run_dual_palm,
    "classify": _run_classify,
    "strip-counterexample": _run_strip_counterexample,
    "embed-roundtrip": _run_embed_roundtrip,
    "unimodularity": _run_unimodularity,
}

_DEFAULT_N = {
    "sample": 20000,
    "mass-transport": 100000,
    "mass-flow": 100000,
    "mecke": 5000,
    "reciprocal-reverse": 5000,
    "dual-palm": 10000,
    "classify": 1000,
    "strip-counterexample": 100000,
    "embed-roundtrip": 1000,
    "unimodularity": 10000,
}


def run(spec: ExperimentSpec, seed: int | None = None, threads: int | None = None) -> ReportRecord:
    """Execute one experiment; deterministic given (spec, seed)."""
    params = spec.as_dict()
    n = _get_int(params, "n_samples", _DEFAULT_N[spec.kind])
    if n <= 0:
        raise ConfigError("n_samples must be positive")
    if seed is None:
        seed = _get_int(params, "seed", 0)
    if threads is None:
        threads = _get_int(params, "threads", 0) or _env_threads()
    rng = RngStream(seed, 0)
    started = time.perf_counter()
    stats, censoring = _RUNNERS[spec.kind](spec, params, n, seed, threads, rng)
    duration = time.perf_counter() - started
    echo = dict(params)
    echo["n_samples"] = str(n)
    return ReportRecord(spec.kind, echo, stats, censoring, seed, duration)


def _env_threads() -> int:
    raw = os.environ.get("PALMSHIFT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as exc:
            raise ConfigError(f"PALMSHIFT_THREADS must be an integer, got {raw!r}") from exc
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# Emission


def _fmt_float(x: float) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "null"
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    return str(x)


def _json_value(v) -> str:
    import json as _json

    if isinstance(v, str):
        return _json.dumps(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_float(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, dict):
        inner = ", ".join(f"{_json.dumps(str(k))}: {_json_value(val)}" for k, val in v.items())
        return "{" + inner + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)}")


CSV_COLUMNS = ("experiment", "seed", "statistic", "estimate", "se", "verdict", "censoring")


def emit(reports: list[ReportRecord] | ReportRecord, format: str = "json") -> bytes:
    """Render reports: newline-delimited JSON (one record per line) or
    CSV with the documented column order.  Floats carry 17 significant
    digits; wall-clock durations are never emitted, so identical
    (spec, seed) pairs produce identical bytes.
    """
    if isinstance(reports, ReportRecord):
        reports = [reports]
    if format == "json":
        lines = [_json_value(r.to_dict()) for r in reports]
        return ("\n".join(lines) + "\n").encode()
    if format != "csv":
        raise ValueError(f"unknown format {format!r}")
    rows = [",".join(CSV_COLUMNS)]
    for r in reports:
        cens = ";".join(f"{k}={v}" for k, v in sorted(r.censoring.items()))
        for s in r.statistics:
            rows.append(
                ",".join(
                    [
                        r.kind,
                        str(r.seed),
                        s.name,
                        _fmt_float(float(s.estimate)).strip('"'),
                        _fmt_float(float(s.se)).strip('"'),
                        s.verdict,
                        cens,
                    ]
                )
            )
    return ("\n".join(rows) + "\n").encode()
