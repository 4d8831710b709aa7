"""Closed-form DPS-QKD link model.

Click probability per slot, sifted rate with dead time, QBER, and the
secure-key fraction against general individual attacks. Everything here is
a pure function of its arguments.
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

from .errors import InvalidParameterError, ModelDomainError, NoCrossingError
from .params import ChannelSpec, SystemParams

DEFAULT_QBER_THRESHOLD = 0.041


def binary_entropy(p: float) -> float:
    """Shannon entropy of a Bernoulli(p) variable in bits (non-negative)."""
    if p < 0.0 or p > 1.0:
        raise InvalidParameterError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def transmittance(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


def click_probability(params: SystemParams, channel: ChannelSpec) -> tuple[float, float, float]:
    """Per-slot probabilities ``(p_signal, p_dark, p_click)`` at Bob."""
    if not isinstance(params, SystemParams) or not isinstance(channel, ChannelSpec):
        raise InvalidParameterError("expected SystemParams and ChannelSpec")
    p_signal = params.mu * params.eta_link * transmittance(channel.loss_db + params.system_loss_db)
    p_dark = 2.0 * params.dcr_mean * params.time_window_s
    return p_signal, p_dark, p_signal + p_dark


def sifted_rate(p_click: float, params: SystemParams) -> float:
    """Sifted key rate in bits/s for a per-slot click probability."""
    if not 0.0 <= p_click <= 1.0:
        raise InvalidParameterError(f"p_click must be in [0, 1], got {p_click}")
    nu = params.clock_rate_hz
    return nu * p_click * math.exp(-nu * p_click * params.dead_time_s)


def qber_analytic(p_signal: float, p_dark: float, params: SystemParams) -> float:
    p_click = p_signal + p_dark
    if p_click <= 0.0:
        raise ModelDomainError("QBER undefined: click probability is zero")
    return (params.baseline_error * p_signal + 0.5 * p_dark) / p_click


def secure_fraction(qber: float, params: SystemParams | None = None, *, mu: float | None = None,
                    ec_inefficiency: float | None = None, strict: bool = True) -> float:
    """Secure bits per sifted bit, ``R_secure / R_sifted``.

    Uses the non-negative binary entropy and subtracts the error-correction
    cost ``f * h(qber)``. The value goes negative above the security
    threshold; callers clamp. When the privacy-amplification log argument
    leaves its domain, ``strict`` raises, otherwise ``-inf`` is returned.
    """
    if params is not None:
        mu = params.mu if mu is None else mu
        ec_inefficiency = params.ec_inefficiency if ec_inefficiency is None else ec_inefficiency
    if mu is None or ec_inefficiency is None:
        raise InvalidParameterError("need params or both mu and ec_inefficiency")
    if not 0.0 <= qber < 0.5:
        raise InvalidParameterError(f"qber must be in [0, 0.5), got {qber}")
    arg = 1.0 - qber * qber - 0.5 * (1.0 - 6.0 * qber) ** 2
    if arg <= 0.0:
        if strict:
            raise ModelDomainError(f"privacy amplification term undefined at qber={qber}")
        return -math.inf
    return -(1.0 - 2.0 * mu) * math.log2(arg) - ec_inefficiency * binary_entropy(qber)


def usable_fraction(qber: float, params: SystemParams) -> float:
    """Secure fraction clamped to zero at and beyond the security threshold.

    The bracket turns positive again for QBER of roughly 0.34 to 0.38; that
    region is not secure and is clamped as well.
    """
    if qber >= 0.5 or qber >= security_threshold(params.mu, params.ec_inefficiency):
        return 0.0
    return max(0.0, secure_fraction(qber, params, strict=False))


def secure_rate(sifted_bps: float, qber: float, params: SystemParams) -> float:
    """Clamped secure rate from a (sifted rate, QBER) pair."""
    return sifted_bps * usable_fraction(qber, params)


@functools.lru_cache(maxsize=64)
def security_threshold(mu: float = 0.2, ec_inefficiency: float = 1.2, tol: float = 1e-12) -> float:
    """QBER of the first zero crossing of the secure fraction."""
    lo, hi = 0.0, 1.0 / 6.0
    if secure_fraction(lo, mu=mu, ec_inefficiency=ec_inefficiency) <= 0:
        raise NoCrossingError(f"no secure key even at zero QBER for mu={mu}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if secure_fraction(mid, mu=mu, ec_inefficiency=ec_inefficiency, strict=False) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class AnalyticPoint:
    loss_db: float
    p_signal: float
    p_dark: float
    p_click: float
    sifted_rate_bps: float
    qber: float
    secure_fraction: float
    secure_rate_bps: float

    def to_dict(self) -> dict:
        return asdict(self)


def analytic_point(params: SystemParams, channel: ChannelSpec) -> AnalyticPoint:
    p_signal, p_dark, p_click = click_probability(params, channel)
    rate = sifted_rate(p_click, params)
    qber = qber_analytic(p_signal, p_dark, params)
    frac = secure_fraction(qber, params, strict=False) if qber < 0.5 else -math.inf
    return AnalyticPoint(
        loss_db=channel.loss_db,
        p_signal=p_signal,
        p_dark=p_dark,
        p_click=p_click,
        sifted_rate_bps=rate,
        qber=qber,
        secure_fraction=frac,
        secure_rate_bps=rate * usable_fraction(qber, params),
    )


def _qber_at(params: SystemParams, loss_db: float) -> float:
    ps, pd, _ = click_probability(params, ChannelSpec(loss_db))
    return qber_analytic(ps, pd, params)


def max_tolerable_loss(params: SystemParams, qber_threshold: float = DEFAULT_QBER_THRESHOLD,
                       tol_db: float = 0.01) -> float:
    """Channel loss at which the analytic QBER reaches ``qber_threshold``.

    Returns ``math.inf`` when there are no dark counts, since the QBER then
    never rises above the baseline error.
    """
    if not 0.0 < qber_threshold < 0.5:
        raise InvalidParameterError(f"threshold must be in (0, 0.5), got {qber_threshold}")
    if params.dcr_mean == 0.0:
        if params.baseline_error < qber_threshold:
            return math.inf
        raise NoCrossingError("baseline error already above threshold")
    if params.mu == 0.0 or _qber_at(params, 0.0) >= qber_threshold:
        raise NoCrossingError("QBER at 0 dB is not below the threshold")
    lo, hi = 0.0, 1.0
    while _qber_at(params, hi) < qber_threshold:
        lo, hi = hi, 2.0 * hi
        if hi > 1e4:
            raise NoCrossingError("QBER never reaches the threshold")
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if _qber_at(params, mid) < qber_threshold:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def loss_to_distance(loss_db: float, attenuation_db_per_km: float) -> float:
    if not attenuation_db_per_km > 0:
        raise InvalidParameterError(f"attenuation must be > 0, got {attenuation_db_per_km}")
    return loss_db / attenuation_db_per_km


def distance_to_loss(length_km: float, attenuation_db_per_km: float) -> float:
    if not attenuation_db_per_km > 0:
        raise InvalidParameterError(f"attenuation must be > 0, got {attenuation_db_per_km}")
    return length_km * attenuation_db_per_km
