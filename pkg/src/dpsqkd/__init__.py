"""Differential-phase-shift QKD over high-loss channels: closed-form link
model, click-level simulator and key distillation."""

__version__ = "0.1.0"

from .errors import ConfigError, InvalidParameterError, ModelDomainError, NoCrossingError  # noqa: E402
from .model import (  # noqa: E402
    AnalyticPoint,
    analytic_point,
    binary_entropy,
    click_probability,
    distance_to_loss,
    loss_to_distance,
    max_tolerable_loss,
    qber_analytic,
    secure_fraction,
    security_threshold,
    sifted_rate,
)
from .params import PRESETS, ChannelSpec, DetectorParams, EtaComposition, SystemParams, get_preset  # noqa: E402
