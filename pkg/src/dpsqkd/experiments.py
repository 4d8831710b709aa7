"""Published-result scenarios, loss sweeps and model/simulation/measurement comparisons."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .model import (
    DEFAULT_QBER_THRESHOLD,
    AnalyticPoint,
    analytic_point,
    loss_to_distance,
    max_tolerable_loss,
    secure_rate,
    security_threshold,
)
from .params import ChannelSpec, EtaComposition, SystemParams, get_preset
from .postprocess import distill
from .sim import empirical_rates, event_phases, sift, simulate_event_driven

DSF_MIN_DURATION_S = 1e4
TARGET_CLICKS = 2000


@dataclass(frozen=True)
class Measured:
    """A published value with its asymmetric error bar (zero when none given)."""

    value: float
    plus: float = 0.0
    minus: float = 0.0


@dataclass(frozen=True)
class Published:
    source: str
    sifted_rate_bps: Measured | None = None
    qber: Measured | None = None
    secure_rate_bps: Measured | None = None
    secure_key: bool = True


@dataclass(frozen=True)
class Scenario:
    name: str
    params: SystemParams
    channel: ChannelSpec
    published: Published | None = None
    # tolerance on the secure rate re-derived from the published (sifted, qber) pair
    eq4_abs_tol: float | None = None
    eq4_rel_tol: float | None = None

    def __post_init__(self):
        if self.published is not None and not self.published.source:
            raise ValueError(f"scenario {self.name}: published values need a source tag")

    def with_composition(self, mode) -> "Scenario":
        return Scenario(self.name, self.params.with_composition(mode), self.channel, self.published,
                        self.eq4_abs_tol, self.eq4_rel_tol)


def builtin_scenarios(composition=EtaComposition.SUM) -> list[Scenario]:
    dcr004 = get_preset("paper-dcr004").with_composition(composition)
    dcr001 = get_preset("paper-dcr001").with_composition(composition)
    return [
        Scenario(
            "attenuator-52.7dB", dcr004, ChannelSpec(52.7),
            Published("measured row 1: 52.7 dB (attenuator), DCR 0.04 cps",
                      Measured(31.95), Measured(0.0102), Measured(12.5)),
            eq4_rel_tol=0.05,
        ),
        Scenario(
            "dsf-306km-66dB", dcr004, ChannelSpec.from_fiber(306.0, 66.0 / 306.0),
            Published("measured row 2: 66 dB (306 km DSF), DCR 0.04 cps",
                      Measured(0.98, 0.09, 0.12), Measured(0.0264, 0.0063, 0.0039), Measured(0.17, 0.04, 0.07)),
            eq4_abs_tol=0.02,
        ),
        Scenario(
            "dsf-336km-72dB", dcr001, ChannelSpec.from_fiber(336.0, 72.0 / 336.0),
            Published("measured row 3: 72 dB (336 km DSF), DCR 0.01 cps",
                      Measured(0.22, 0.10, 0.11), Measured(0.0293, 0.0072, 0.0118), Measured(0.03, 0.04, 0.02)),
            eq4_abs_tol=0.005,
        ),
        Scenario(
            "loss-77.9dB", dcr001, ChannelSpec(77.9),
            Published("in-text observation at 77.9 dB, DCR 0.01 cps (no tabulated row)",
                      qber=Measured(0.109), secure_rate_bps=Measured(0.0), secure_key=False),
            eq4_abs_tol=0.0,
        ),
    ]


def scenario_by_name(name: str, composition=EtaComposition.SUM) -> Scenario:
    for sc in builtin_scenarios(composition):
        if sc.name == name:
            return sc
    raise KeyError(name)


@dataclass
class SweepResult:
    points: list[AnalyticPoint]
    zero_crossing_db: float
    params: SystemParams


def loss_grid(loss_range_db, step_db) -> np.ndarray:
    lo, hi = (float(v) for v in loss_range_db)
    if not step_db > 0:
        raise ValueError(f"step must be > 0, got {step_db}")
    if hi < lo:
        raise ValueError(f"empty loss range [{lo}, {hi}]")
    n = int(math.floor((hi - lo) / step_db + 1e-9)) + 1
    return np.round(lo + step_db * np.arange(n), 9)


def sweep_loss(params: SystemParams, loss_range_db=(40.0, 80.0), step_db: float = 1.0) -> SweepResult:
    """Analytic curves over a loss grid, plus the loss where the secure rate vanishes."""
    pts = [analytic_point(params, ChannelSpec(float(L))) for L in loss_grid(loss_range_db, step_db)]
    thr = security_threshold(params.mu, params.ec_inefficiency)
    return SweepResult(pts, max_tolerable_loss(params, thr), params)


def distance_projection(params: SystemParams, attenuation_db_per_km: float,
                        qber_threshold: float = DEFAULT_QBER_THRESHOLD, loss_db: float | None = None) -> float:
    """Reachable fiber length at the given attenuation.

    The loss budget is ``loss_db`` when given, otherwise the analytic
    maximum tolerable loss for ``params``.
    """
    budget = max_tolerable_loss(params, qber_threshold) if loss_db is None else loss_db
    return loss_to_distance(budget, attenuation_db_per_km)


# ---------------------------------------------------------------------------
# comparison with the published measurements
# ---------------------------------------------------------------------------

@dataclass
class SimSummary:
    seeds: list[int]
    duration_s: float
    sifted_rates: list[float]
    qbers: list[float]
    secure_rates: list[float]

    @staticmethod
    def _mean_se(xs):
        a = np.asarray(xs, dtype=float)
        se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else None
        return float(a.mean()), se

    @property
    def sifted(self):
        return self._mean_se(self.sifted_rates)

    @property
    def qber(self):
        return self._mean_se(self.qbers)

    @property
    def secure(self):
        return self._mean_se(self.secure_rates)


@dataclass
class ComparisonRow:
    scenario: Scenario
    analytic: AnalyticPoint
    analytic_by_mode: dict
    simulated: SimSummary
    rederived_secure_bps: float | None
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    seeds: list[int]
    composition: EtaComposition
    kernel: str = "event-driven"
    generator: str = rng.GENERATOR_NAME

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def rederive_secure_rate(sifted_bps: float, qber: float, params: SystemParams) -> float:
    """Clamped secure rate from a measured (sifted rate, QBER) pair."""
    return secure_rate(sifted_bps, qber, params)


def simulate_scenario(sc: Scenario, seeds, duration_s: float | None = None) -> SimSummary:
    point = analytic_point(sc.params, sc.channel)
    if duration_s is None:
        duration_s = DSF_MIN_DURATION_S
        if point.sifted_rate_bps > 0:
            duration_s = max(duration_s, TARGET_CLICKS / point.sifted_rate_bps)
        duration_s = float(math.ceil(duration_s))
    rates, qbers, secure = [], [], []
    for s in seeds:
        stream = simulate_event_driven(sc.params, sc.channel, duration_s, s)
        pair = sift(stream, event_phases(stream))
        r, q = empirical_rates(pair, stream.duration_s)
        rep = distill(pair, sc.params, seed=s)
        rates.append(r)
        qbers.append(q if q is not None else float("nan"))
        secure.append(rep.secure_rate(stream.duration_s))
    return SimSummary(list(seeds), duration_s, rates, qbers, secure)


@dataclass(frozen=True)
class Tolerances:
    """Pass/fail bounds for the comparison report.

    ``eq4`` maps a scenario name to ``(abs_tol, rel_tol)`` and overrides
    the scenario's own tolerance for the re-derived secure rate.
    """

    sifted_factor: float = 2.0
    n_se: float = 3.0
    eq4: dict = field(default_factory=dict)


def _within_se(value, mean, se, n_se):
    return abs(value - mean) <= n_se * se + 1e-15


def reproduce_table1(seeds: int = 3, tolerances: Tolerances | None = None,
                     composition=EtaComposition.SUM, base_seed: int = 0,
                     scenarios: list[Scenario] | None = None) -> ComparisonReport:
    """Compare analytic model, event-driven simulation and published values.

    Checks recorded per row:

    ``eq4``
        Secure rate re-derived from the published (sifted, QBER) pair
        matches the published secure rate.
    ``sifted_factor2``
        Analytic sifted rate within ``sifted_factor`` of the measured one.
    ``qber_side``
        Analytic and published QBER on the same side of the security threshold.
    ``sim_sifted`` / ``sim_qber``
        Simulation mean within ``n_se`` standard errors of the analytic value.
    """
    tol = Tolerances() if tolerances is None else tolerances
    if seeds < 1:
        raise ValueError("need at least one seed")
    seed_list = [base_seed + i for i in range(seeds)]
    scenarios = builtin_scenarios(composition) if scenarios is None else scenarios
    rows = []
    for sc in sorted(scenarios, key=lambda s: s.name):
        point = analytic_point(sc.params, sc.channel)
        by_mode = {}
        for mode in EtaComposition:
            p = analytic_point(sc.params.with_composition(mode), sc.channel)
            by_mode[mode.value] = {"sifted_rate_bps": p.sifted_rate_bps, "qber": p.qber,
                                   "secure_rate_bps": p.secure_rate_bps}
        sim = simulate_scenario(sc, seed_list)
        pub = sc.published
        checks = {}
        rederived = None
        if pub is not None:
            if pub.qber is not None and pub.secure_rate_bps is not None:
                sifted_pub = pub.sifted_rate_bps.value if pub.sifted_rate_bps else 1.0
                rederived = rederive_secure_rate(sifted_pub, pub.qber.value, sc.params)
                target = pub.secure_rate_bps.value
                abs_tol, rel_tol = tol.eq4.get(sc.name, (sc.eq4_abs_tol, sc.eq4_rel_tol))
                bound = abs_tol if abs_tol is not None else rel_tol * target
                checks["eq4"] = abs(rederived - target) <= bound
            if pub.sifted_rate_bps is not None:
                ratio = point.sifted_rate_bps / pub.sifted_rate_bps.value
                checks["sifted_factor2"] = 1.0 / tol.sifted_factor <= ratio <= tol.sifted_factor
            if pub.qber is not None:
                thr = security_threshold(sc.params.mu, sc.params.ec_inefficiency)
                checks["qber_side"] = (point.qber < thr) == (pub.qber.value < thr)
        # standard errors from counting statistics; the sample spread of a few
        # seeds is reported but too noisy to test against
        n_total = max(point.sifted_rate_bps * sim.duration_s, 1.0) * len(seed_list)
        rate_se = math.sqrt(n_total) / (sim.duration_s * len(seed_list))
        qber_se = math.sqrt(point.qber * (1 - point.qber) / n_total)
        checks["sim_sifted"] = _within_se(point.sifted_rate_bps, sim.sifted[0], rate_se, tol.n_se)
        checks["sim_qber"] = _within_se(point.qber, sim.qber[0], qber_se, tol.n_se)
        rows.append(ComparisonRow(sc, point, by_mode, sim, rederived, checks))
    return ComparisonReport(rows, seed_list, EtaComposition(composition))
