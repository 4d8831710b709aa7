"""Link, detector and channel parameter sets, plus the built-in presets."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace

from .errors import InvalidParameterError


class EtaComposition(str, enum.Enum):
    """How the two per-detector efficiencies combine into a single link efficiency."""

    SUM_HALVED = "sum_halved"
    MEAN = "mean"
    SUM = "sum"

    def combine(self, eta1: float, eta2: float) -> float:
        if self is EtaComposition.SUM:
            return eta1 + eta2
        return 0.5 * (eta1 + eta2)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidParameterError(msg)


@dataclass(frozen=True)
class DetectorParams:
    """One single-photon detector.

    Parameters
    ----------
    eta_fitted : float
        System detection efficiency before the gating-window reduction.
    dcr : float
        Dark count rate in counts per second.
    window_efficiency_factor : float
        Multiplicative efficiency loss from the acceptance window.
    """

    eta_fitted: float
    dcr: float
    window_efficiency_factor: float = 0.5

    def __post_init__(self):
        _check(0.0 < self.eta_fitted <= 1.0, f"eta_fitted must be in (0, 1], got {self.eta_fitted}")
        _check(self.dcr >= 0.0 and math.isfinite(self.dcr), f"dcr must be finite and >= 0, got {self.dcr}")
        _check(0.0 < self.window_efficiency_factor <= 1.0,
               f"window_efficiency_factor must be in (0, 1], got {self.window_efficiency_factor}")

    @property
    def eta_effective(self) -> float:
        return self.eta_fitted * self.window_efficiency_factor


@dataclass(frozen=True)
class SystemParams:
    """Every constant of the link model apart from the channel loss."""

    mu: float = 0.2
    clock_rate_hz: float = 1e9
    time_window_s: float = 100e-12
    dead_time_s: float = 20e-9
    baseline_error: float = 0.01
    ec_inefficiency: float = 1.2
    system_loss_db: float = 2.0
    detector1: DetectorParams = field(default_factory=lambda: DetectorParams(0.044, 0.01))
    detector2: DetectorParams = field(default_factory=lambda: DetectorParams(0.031, 0.01))
    eta_composition: EtaComposition = EtaComposition.SUM

    def __post_init__(self):
        # accept the plain string form coming from configs
        object.__setattr__(self, "eta_composition", EtaComposition(self.eta_composition))
        # mu == 0 is allowed: it is the dark-only limit used in tests and the CLI
        _check(self.mu >= 0.0, f"mu must be >= 0, got {self.mu}")
        _check(self.clock_rate_hz > 0.0, f"clock_rate_hz must be > 0, got {self.clock_rate_hz}")
        _check(self.time_window_s > 0.0, f"time_window_s must be > 0, got {self.time_window_s}")
        _check(self.dead_time_s >= 0.0, f"dead_time_s must be >= 0, got {self.dead_time_s}")
        _check(0.0 <= self.baseline_error < 0.5, f"baseline_error must be in [0, 0.5), got {self.baseline_error}")
        _check(self.ec_inefficiency >= 1.0, f"ec_inefficiency must be >= 1, got {self.ec_inefficiency}")
        _check(self.system_loss_db >= 0.0, f"system_loss_db must be >= 0, got {self.system_loss_db}")
        _check(self.clock_rate_hz * self.time_window_s <= 1.0 + 1e-12,
               "time window does not fit in one clock slot")
        _check(self.eta_link <= 1.0, f"composed efficiency exceeds 1 ({self.eta_link})")

    @property
    def eta_link(self) -> float:
        return self.eta_composition.combine(self.detector1.eta_effective, self.detector2.eta_effective)

    @property
    def dcr_mean(self) -> float:
        return 0.5 * (self.detector1.dcr + self.detector2.dcr)

    @property
    def dead_slots(self) -> int:
        """Minimum slot separation between two registered clicks."""
        # round before ceil so 20e-9 * 1e9 does not become 21
        return int(math.ceil(round(self.dead_time_s * self.clock_rate_hz, 9)))

    def with_composition(self, mode) -> "SystemParams":
        return replace(self, eta_composition=EtaComposition(mode))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eta_composition"] = self.eta_composition.value
        return d


@dataclass(frozen=True)
class ChannelSpec:
    """Channel loss in dB, excluding the receiver's interferometer loss.

    ``length_km`` and ``attenuation_db_per_km`` record where the loss came
    from; both or neither must be given.
    """

    loss_db: float
    length_km: float | None = None
    attenuation_db_per_km: float | None = None

    def __post_init__(self):
        _check(self.loss_db >= 0.0, f"loss_db must be >= 0, got {self.loss_db}")
        has_len = self.length_km is not None
        has_att = self.attenuation_db_per_km is not None
        _check(has_len == has_att, "length_km and attenuation_db_per_km must be given together")
        if has_len:
            _check(self.length_km >= 0 and self.attenuation_db_per_km > 0, "invalid fiber provenance")
            expect = self.length_km * self.attenuation_db_per_km
            _check(math.isclose(self.loss_db, expect, rel_tol=1e-9, abs_tol=1e-12),
                   f"loss_db {self.loss_db} != length x attenuation {expect}")

    @classmethod
    def from_fiber(cls, length_km: float, attenuation_db_per_km: float) -> "ChannelSpec":
        return cls(length_km * attenuation_db_per_km, length_km, attenuation_db_per_km)

    @property
    def has_provenance(self) -> bool:
        return self.length_km is not None


def _published_params(eta1: float, eta2: float, dcr: float) -> SystemParams:
    return SystemParams(
        detector1=DetectorParams(eta1, dcr, 0.5),
        detector2=DetectorParams(eta2, dcr, 0.5),
    )


PRESETS = {
    "paper-dcr004": _published_params(0.067, 0.040, 0.04),
    "paper-dcr001": _published_params(0.044, 0.031, 0.01),
}


def get_preset(name: str) -> SystemParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidParameterError(
            f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
