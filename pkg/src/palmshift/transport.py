"""Monte Carlo verification engine for the transport identities.

Every check here compares two independently estimated sides of an
identity that holds exactly for the infinite-volume process:

* mass transport: expected kernel mass sent out of the typical point
  equals the modular-weighted expected mass received by it;
* the mass-flow relation: ``E[1/modular(h)] = E[#preimages of the
  typical point]`` for any shift with point-map ``h``;
* Palm invariance under bijective shifts (and its failure for
  non-bijective or non-isomodular ones), probed through a battery of
  bounded statistics;
* equality in law of the reciprocal ``h^-1`` and the reverse ``h^-``
  for bijective shifts on unimodular models;
* agreement of the two independent Palm estimators (add-a-point versus
  window averaging).

Verdicts use three combined standard errors for mean comparisons and a
0.01 threshold for two-sample Kolmogorov-Smirnov p-values; these are
the finite-sample surrogates for identities that are exact in the
limit.  Samples whose evaluation would have to read outside the
observation window are discarded and counted, and a verdict is
withheld whenever more than half of an ensemble was discarded.

Independent replications use stream ids ``base + i`` for the first
ensemble and ``base + 2**40 + i`` for the second, so results are
bit-identical no matter how replications are batched across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as sps

from . import groups, sampling, shifts
from .groups import Box, GroupModel, Window
from .sampling import PointConfiguration, ProcessSpec, RngStream
from .shifts import PointShiftSpec

SECOND_ENSEMBLE_OFFSET = 2**40
CENSORING_LIMIT = 0.5
KS_THRESHOLD = 0.01

VERDICT_CONSISTENT = "consistent"
VERDICT_INCONSISTENT = "inconsistent"
VERDICT_WITHHELD = "withheld"


# ---------------------------------------------------------------------------
# Palm ensembles


def palm_sampler(process: ProcessSpec, model: GroupModel, window: Window):
    """Callable drawing one Palm sample per stream."""
    if process.kind == "poisson":
        return lambda rng: sampling.palm_sample_slivnyak(process, model, window, rng)
    if model.kind != groups.EUCLIDEAN or model.dim != 1:
        raise ValueError("lattice Palm sampling lives on euclidean d=1")
    fixed = sampling.palm_sample_lattice(process, window)
    return lambda rng: fixed


# ---------------------------------------------------------------------------
# Transport functions


@dataclass(frozen=True)
class TransportFunction:
    """Nonnegative diagonally invariant kernel in centered form.

    The kernel factors through a shift rule: mass ``weight(u)`` flows
    from each point to its image, where ``u`` is the displacement of
    the image seen from the source.  Diagonal invariance holds by
    construction because the kernel reads the configuration only in
    recentered coordinates.
    """

    name: str
    shift: PointShiftSpec
    weight: str = "unit"  # "unit" | "inverse_modular" | "zero"
    scale: float = 1.0

    def weight_value(self, model: GroupModel, u) -> float:
        if self.weight == "zero":
            return 0.0
        if self.weight == "unit":
            return self.scale
        if self.weight == "inverse_modular":
            return self.scale * float(model.modular(model.invert(u)))
        raise ValueError(f"unknown transport weight {self.weight!r}")

    def centered_kernel(self, config: PointConfiguration, u) -> float:
        """tau evaluated at the identity of a recentered configuration."""
        ev = shifts.evaluate_at(self.shift, config, config.identity_index())
        if ev.censored or ev.image is None:
            return 0.0
        if not np.array_equal(ev.image, np.asarray(u, dtype=float)):
            return 0.0
        return self.weight_value(config.model, u)

    def scaled(self, c: float) -> "TransportFunction":
        return TransportFunction(f"{c}*{self.name}", self.shift, self.weight, self.scale * c)


def shift_edge_transport(shift: PointShiftSpec, weight: str = "unit") -> TransportFunction:
    return TransportFunction(f"{shift.describe()}[{weight}]", shift, weight)


def zero_transport() -> TransportFunction:
    return TransportFunction("zero", shifts.identity_shift(), "zero")


# ---------------------------------------------------------------------------
# Reports


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    if n == 0:
        return math.nan, math.nan
    mean = float(np.mean(values))
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


def three_sigma_verdict(lhs: np.ndarray, rhs: np.ndarray) -> str:
    lm, ls = _mean_se(lhs)
    rm, rs = _mean_se(rhs)
    if math.isnan(lm) or math.isnan(rm):
        return VERDICT_WITHHELD
    if abs(lm - rm) <= 3.0 * math.hypot(ls, rs):
        return VERDICT_CONSISTENT
    return VERDICT_INCONSISTENT


@dataclass
class TransportReport:
    """Two-sided Monte Carlo comparison with standard errors."""

    lhs_name: str
    rhs_name: str
    lhs_mean: float
    lhs_se: float
    rhs_mean: float
    rhs_se: float
    n_samples: int
    lhs_discarded: int
    rhs_discarded: int
    verdict: str
    lhs_values: np.ndarray = field(repr=False, default=None)
    rhs_values: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_values(
        cls,
        lhs_name: str,
        rhs_name: str,
        lhs: np.ndarray,
        rhs: np.ndarray,
        n_samples: int,
        lhs_discarded: int,
        rhs_discarded: int,
    ) -> "TransportReport":
        lm, ls = _mean_se(lhs)
        rm, rs = _mean_se(rhs)
        if lhs_discarded > CENSORING_LIMIT * n_samples or rhs_discarded > CENSORING_LIMIT * n_samples:
            verdict = VERDICT_WITHHELD
        else:
            verdict = three_sigma_verdict(lhs, rhs)
        return cls(
            lhs_name, rhs_name, lm, ls, rm, rs, n_samples,
            lhs_discarded, rhs_discarded, verdict, lhs, rhs,
        )

    @classmethod
    def merge(cls, parts: list["TransportReport"]) -> "TransportReport":
        first = parts[0]
        return cls.from_values(
            first.lhs_name,
            first.rhs_name,
            np.concatenate([p.lhs_values for p in parts]),
            np.concatenate([p.rhs_values for p in parts]),
            sum(p.n_samples for p in parts),
            sum(p.lhs_discarded for p in parts),
            sum(p.rhs_discarded for p in parts),
        )


@dataclass
class MeckeStatistic:
    name: str
    palm_mean: float
    palm_se: float
    shifted_mean: float
    shifted_se: float
    ks_statistic: float
    ks_pvalue: float
    consistent: bool  # means agree within 3 combined standard errors


@dataclass
class MeckeReport:
    """Distributional comparison of a statistic battery under two ensembles."""

    statistics: list[MeckeStatistic]
    n_samples: int
    palm_discarded: int
    shifted_discarded: int
    exact_match: bool | None = None
    palm_values: np.ndarray = field(repr=False, default=None)
    shifted_values: np.ndarray = field(repr=False, default=None)
    names: list[str] = field(default_factory=list)

    @classmethod
    def from_values(
        cls,
        names: list[str],
        palm_values: np.ndarray,
        shifted_values: np.ndarray,
        n_samples: int,
        palm_discarded: int,
        shifted_discarded: int,
        check_exact: bool = False,
    ) -> "MeckeReport":
        stats_list = []
        for k, name in enumerate(names):
            a = palm_values[:, k]
            b = shifted_values[:, k]
            am, ase = _mean_se(a)
            bm, bse = _mean_se(b)
            if a.size and b.size:
                ks = sps.ks_2samp(a, b, method="asymp" if min(a.size, b.size) > 500 else "auto")
                ks_stat, ks_p = float(ks.statistic), float(ks.pvalue)
            else:
                ks_stat, ks_p = math.nan, math.nan
            consistent = abs(am - bm) <= 3.0 * math.hypot(ase, bse)
            stats_list.append(
                MeckeStatistic(name, am, ase, bm, bse, ks_stat, ks_p, consistent)
            )
        exact = None
        if check_exact:
            exact = (
                palm_values.shape == shifted_values.shape
                and bool(np.all(palm_values == shifted_values))
            )
        return cls(
            stats_list, n_samples, palm_discarded, shifted_discarded,
            exact, palm_values, shifted_values, names,
        )

    @classmethod
    def merge(cls, parts: list["MeckeReport"]) -> "MeckeReport":
        first = parts[0]
        return cls.from_values(
            first.names,
            np.concatenate([p.palm_values for p in parts]),
            np.concatenate([p.shifted_values for p in parts]),
            sum(p.n_samples for p in parts),
            sum(p.palm_discarded for p in parts),
            sum(p.shifted_discarded for p in parts),
            check_exact=first.exact_match is not None,
        )


# ---------------------------------------------------------------------------
# Mass transport and mass flow


def _out_mass_sample(tau: TransportFunction, config: PointConfiguration) -> float | None:
    """Kernel mass sent out of the identity atom; None when censored."""
    ev = shifts.evaluate_at(tau.shift, config, config.identity_index())
    if ev.censored:
        return None
    return tau.weight_value(config.model, ev.image)


def _in_mass_sample(tau: TransportFunction, config: PointConfiguration) -> float | None:
    """Modular-weighted kernel mass received by the identity atom."""
    model = config.model
    analysis = shifts.identity_preimage_analysis(tau.shift, config)
    if analysis.threatened:
        return None
    total = 0.0
    for j in analysis.definite:
        y_inv = model.invert(config.points[j])
        total += tau.weight_value(model, y_inv) * float(model.modular(y_inv))
    return total


def verify_mass_transport(
    tau: TransportFunction,
    process: ProcessSpec,
    model: GroupModel,
    window: Window,
    n_samples: int,
    rng: RngStream,
) -> TransportReport:
    """Estimate both sides of the mass transport identity independently.

    The out-side averages the mass the identity atom sends; the in-side
    averages the mass it receives, each incoming contribution weighted
    by the modular function of the inverted source.  Samples whose
    evaluation is not determined by the window are discarded and
    counted.
    """
    shifts.validate_shift_model(tau.shift, model)
    sampler = palm_sampler(process, model, window)
    lhs, rhs = [], []
    lhs_disc = rhs_disc = 0
    for i in range(n_samples):
        value = _out_mass_sample(tau, sampler(rng.shifted(i)))
        if value is None:
            lhs_disc += 1
        else:
            lhs.append(value)
    for i in range(n_samples):
        value = _in_mass_sample(tau, sampler(rng.shifted(SECOND_ENSEMBLE_OFFSET + i)))
        if value is None:
            rhs_disc += 1
        else:
            rhs.append(value)
    return TransportReport.from_values(
        "mass_out_of_typical_point",
        "modular_weighted_mass_into_typical_point",
        np.asarray(lhs),
        np.asarray(rhs),
        n_samples,
        lhs_disc,
        rhs_disc,
    )


def mass_flow_check(
    shift: PointShiftSpec,
    process: ProcessSpec,
    model: GroupModel,
    window: Window,
    n_samples: int,
    rng: RngStream,
) -> TransportReport:
    """Mass-flow relation: E[1/modular(h)] against E[#preimages of e].

    The two sides are estimated on independent ensembles; with the
    inverse-modular weight the out-side reduces to ``1/modular(h)`` and
    each incoming unit of weighted mass reduces to exactly 1, so the
    in-side is the preimage count.
    """
    tau = shift_edge_transport(shift, "inverse_modular")
    report = verify_mass_transport(tau, process, model, window, n_samples, rng)
    report.lhs_name = "inverse_modular_of_point_map"
    report.rhs_name = "preimage_count_of_typical_point"
    return report


# ---------------------------------------------------------------------------
# Statistic batteries


@dataclass(frozen=True)
class Statistic:
    """Bounded functional of a configuration seen from a base point.

    ``kind`` selects the rule; evaluation returns None when the value
    is not determined by the observation window.
    """

    name: str
    kind: str  # "count" | "gap"
    region: Box | None = None
    order: int = 0

    def __call__(self, config: PointConfiguration, base: int) -> float | None:
        model = config.model
        pts = config.points
        if self.kind == "count":
            region = groups.translate_window(model, pts[base], self.region)
            if model.kind != groups.TORUS:
                if not isinstance(config.window, Box) or not groups.contains_window(
                    model, config.window, region
                ):
                    return None
                inside = groups.contains_points(model, region, pts)
            else:
                lo = np.asarray(self.region.lo)
                hi = np.asarray(self.region.hi)
                rel = np.mod(pts - pts[base] + 0.5, 1.0) - 0.5
                inside = np.all((rel >= lo) & (rel <= hi), axis=1)
            count = int(np.count_nonzero(inside))
            if inside[base]:
                count -= 1
            return float(count)
        # gap: k-th spacing to the right of the base point (euclidean d=1)
        x = pts[:, 0]
        right = np.sort(x[x > x[base]])
        if right.size < self.order:
            return None
        prev = x[base] if self.order == 1 else right[self.order - 2]
        return float(right[self.order - 1] - prev)


def count_statistic(name: str, lo, hi) -> Statistic:
    return Statistic(name, "count", region=Box(tuple(lo), tuple(hi)))


def gap_statistic(order: int) -> Statistic:
    return Statistic(f"gap{order}", "gap", order=order)


def default_battery(model: GroupModel) -> list[Statistic]:
    """Counts in three fixed recentered windows, plus the first three
    gap statistics on the euclidean line."""
    if model.kind == groups.EUCLIDEAN and model.dim == 1:
        battery = [
            count_statistic(f"count_r{r}", (-r,), (r,)) for r in (1.0, 2.0, 3.0)
        ]
        battery += [gap_statistic(k) for k in (1, 2, 3)]
        return battery
    if model.kind == groups.EUCLIDEAN:
        return [
            count_statistic(f"count_r{r}", (-r,) * model.dim, (r,) * model.dim)
            for r in (0.5, 1.0, 1.5)
        ]
    if model.kind == groups.TORUS:
        return [
            count_statistic(f"count_r{r}", (-r,) * model.dim, (r,) * model.dim)
            for r in (0.05, 0.1, 0.2)
        ]
    boxes = [
        ("count_strip_like", (1.0, -0.1), (4.0, 0.1)),
        ("count_near", (0.5, -0.5), (2.0, 0.5)),
        ("count_left", (0.25, -1.0), (1.0, 1.0)),
    ]
    return [count_statistic(name, lo, hi) for name, lo, hi in boxes]


def _battery_values(
    battery: list[Statistic], config: PointConfiguration, base: int
) -> np.ndarray | None:
    values = np.empty(len(battery))
    for k, stat in enumerate(battery):
        v = stat(config, base)
        if v is None:
            return None
        values[k] = v
    return values


def mecke_invariance_test(
    shift: PointShiftSpec,
    process: ProcessSpec,
    model: GroupModel,
    window: Window,
    n_samples: int,
    rng: RngStream,
    battery: list[Statistic] | None = None,
) -> MeckeReport:
    """Compare the battery's law under the Palm ensemble against the
    ensemble recentered at the image of the typical point.

    For bijective isomodular shifts the two laws coincide; the report
    carries per-statistic means, standard errors and two-sample KS
    p-values either way.  On the deterministic lattice the recentered
    configuration reproduces the Palm one and the report's
    ``exact_match`` flag asserts bitwise equality of the value arrays.
    """
    shifts.validate_shift_model(shift, model)
    if battery is None:
        battery = default_battery(model)
    names = [s.name for s in battery]
    sampler = palm_sampler(process, model, window)

    palm_rows, shifted_rows = [], []
    palm_disc = shifted_disc = 0
    for i in range(n_samples):
        config = sampler(rng.shifted(i))
        row = _battery_values(battery, config, config.identity_index())
        if row is None:
            palm_disc += 1
        else:
            palm_rows.append(row)
    for i in range(n_samples):
        config = sampler(rng.shifted(SECOND_ENSEMBLE_OFFSET + i))
        ev = shifts.evaluate_at(shift, config, config.identity_index())
        if ev.censored:
            shifted_disc += 1
            continue
        recentered = sampling.recenter(config, ev.image_index)
        row = _battery_values(battery, recentered, ev.image_index)
        if row is None:
            shifted_disc += 1
        else:
            shifted_rows.append(row)
    return MeckeReport.from_values(
        names,
        np.asarray(palm_rows).reshape(-1, len(names)),
        np.asarray(shifted_rows).reshape(-1, len(names)),
        n_samples,
        palm_disc,
        shifted_disc,
        check_exact=process.kind == "lattice",
    )


_BIJECTIVE_KINDS = (shifts.RIGHT_NEIGHBOR, shifts.IDENTITY)


def reciprocal_vs_reverse_test(
    shift: PointShiftSpec,
    process: ProcessSpec,
    model: GroupModel,
    window: Window,
    n_samples: int,
    rng: RngStream,
) -> MeckeReport:
    """Compare the law of the inverted point-map against the law of the
    preimage of the typical point, coordinate by coordinate.

    Only defined for shifts that are bijective on the support; for the
    built-in rules that means the identity and the right-neighbor rule.
    """
    if shift.kind not in _BIJECTIVE_KINDS:
        raise shifts.NotBijectiveError(
            f"reciprocal/reverse comparison needs a bijective shift, got {shift.kind}"
        )
    shifts.validate_shift_model(shift, model)
    sampler = palm_sampler(process, model, window)
    names = [f"coord{k}" for k in range(model.dim)]

    recip_rows, reverse_rows = [], []
    recip_disc = reverse_disc = 0
    for i in range(n_samples):
        config = sampler(rng.shifted(i))
        ev = shifts.evaluate_at(shift, config, config.identity_index())
        if ev.censored:
            recip_disc += 1
            continue
        recip_rows.append(model.invert(ev.image))
    for i in range(n_samples):
        config = sampler(rng.shifted(SECOND_ENSEMBLE_OFFSET + i))
        analysis = shifts.identity_preimage_analysis(shift, config)
        if analysis.threatened or len(analysis.definite) != 1:
            reverse_disc += 1
            continue
        reverse_rows.append(config.points[analysis.definite[0]])
    return MeckeReport.from_values(
        names,
        np.asarray(recip_rows).reshape(-1, model.dim),
        np.asarray(reverse_rows).reshape(-1, model.dim),
        n_samples,
        recip_disc,
        reverse_disc,
        check_exact=process.kind == "lattice",
    )


# ---------------------------------------------------------------------------
# Dual Palm estimators


@dataclass(frozen=True)
class PalmFunctional:
    """Named functional of a configuration seen from a base point."""

    name: str
    kind: str  # "unit" | "ball_count" | "shift_modular_jump" | "custom"
    radius: float = 0.0
    shift: PointShiftSpec | None = None
    fn: Callable[[PointConfiguration, int], float | None] | None = None

    def __call__(self, config: PointConfiguration, base: int) -> float | None:
        if self.kind == "unit":
            return 1.0
        if self.kind == "ball_count":
            stat = count_statistic(
                self.name,
                (-self.radius,) * config.model.dim,
                (self.radius,) * config.model.dim,
            )
            return stat(config, base)
        if self.kind == "shift_modular_jump":
            ev = shifts.evaluate_at(self.shift, config, base)
            if ev.censored:
                return None
            model = config.model
            u = model.multiply(model.invert(config.points[base]), ev.image)
            return float(model.modular(model.invert(u)))
        if self.kind == "custom":
            return self.fn(config, base)
        raise ValueError(f"unknown functional kind {self.kind!r}")


def unit_functional() -> PalmFunctional:
    return PalmFunctional("unit", "unit")


def ball_count_functional(radius: float) -> PalmFunctional:
    return PalmFunctional(f"count_r{radius}", "ball_count", radius=radius)


def modular_jump_functional(shift: PointShiftSpec) -> PalmFunctional:
    return PalmFunctional(f"inverse_modular[{shift.describe()}]", "shift_modular_jump", shift=shift)


def dual_palm_consistency(
    functional: PalmFunctional,
    process: ProcessSpec,
    model: GroupModel,
    window: Window,
    inner: Window,
    n_samples: int,
    rng: RngStream,
) -> TransportReport:
    """Estimate a Palm expectation two independent ways.

    Side one samples the Palm version directly (add-a-point) and
    averages the functional at the identity.  Side two samples the
    stationary process and window-averages the functional over the
    points falling in ``inner``, normalized by intensity times the
    inner window's Haar mass; the per-replication sums are the raw
    values so their spread yields an honest standard error.
    """
    if process.kind != "poisson":
        raise ValueError("dual Palm comparison requires a Poisson process")
    if isinstance(window, Box) and not groups.contains_window(model, window, inner):
        raise ValueError("inner window must be contained in the sampling window")
    inner_mass = groups.haar_mass(model, inner)

    direct, direct_disc = [], 0
    for i in range(n_samples):
        config = sampling.palm_sample_slivnyak(process, model, window, rng.shifted(i))
        value = functional(config, config.identity_index())
        if value is None:
            direct_disc += 1
        else:
            direct.append(value)

    norm = process.intensity * inner_mass
    averaged, averaged_disc = [], 0
    for i in range(n_samples):
        config = sampling.sample(process, model, window, rng.shifted(SECOND_ENSEMBLE_OFFSET + i))
        try:
            total, _count = sampling.palm_expectation_window_average(functional, config, inner)
        except ValueError:
            averaged_disc += 1
            continue
        averaged.append(total / norm)

    return TransportReport.from_values(
        f"palm_direct[{functional.name}]",
        f"window_average[{functional.name}]",
        np.asarray(direct),
        np.asarray(averaged),
        n_samples,
        direct_disc,
        averaged_disc,
    )
