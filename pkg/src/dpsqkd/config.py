"""Flat ``key = value`` run configuration.

A configuration is a preset name plus dotted-key overrides. Explicit keys
always win over the preset. Files hold one ``key = value`` per line; ``#``
starts a comment.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, InvalidParameterError
from .params import ChannelSpec, DetectorParams, EtaComposition, SystemParams, get_preset

DEFAULT_PRESET = "paper-dcr001"


def _float(v):
    return float(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"not an integer: {v}")
    return int(f)


def _str(v):
    return str(v).strip()


def _comp(v):
    return EtaComposition(str(v).strip().lower()).value


def _choice(*options):
    def conv(v):
        v = str(v).strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return conv


# key -> (converter, default); None default means "take from the preset" or unset
SCHEMA = {
    "system.mu": (_float, None),
    "system.clock_rate_hz": (_float, None),
    "system.time_window_s": (_float, None),
    "system.dead_time_s": (_float, None),
    "system.baseline_error": (_float, None),
    "system.ec_inefficiency": (_float, None),
    "system.system_loss_db": (_float, None),
    "system.eta_composition": (_comp, None),
    "detector1.eta": (_float, None),
    "detector1.dcr": (_float, None),
    "detector1.window_factor": (_float, None),
    "detector2.eta": (_float, None),
    "detector2.dcr": (_float, None),
    "detector2.window_factor": (_float, None),
    "channel.loss_db": (_float, None),
    "channel.length_km": (_float, None),
    "channel.attenuation_db_per_km": (_float, None),
    "sim.seed": (_int, 0),
    "sim.seeds": (_int, 1),
    "sim.kernel": (_choice("event", "pulse", "dense"), "event"),
    "sim.duration_s": (_float, 1e4),
    "sim.n_slots": (_int, None),
    "sim.sample_fraction": (_float, 1.0),
    "sweep.loss_min_db": (_float, 40.0),
    "sweep.loss_max_db": (_float, 80.0),
    "sweep.step_db": (_float, 1.0),
    "reproduce.composition": (_comp, None),
    "distill.input": (_str, None),
    "distill.duration_s": (_float, None),
    "output.format": (_choice("csv", "report"), "csv"),
    "output.path": (_str, None),
    "output.key_path": (_str, None),
    "output.key_format": (_choice("hex", "bin"), "hex"),
    "output.sifted_path": (_str, None),
}


@dataclass
class RunConfig:
    preset: str = DEFAULT_PRESET
    values: dict = field(default_factory=dict)

    def set(self, key: str, raw) -> None:
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key '{key}'")
        conv, _ = SCHEMA[key]
        try:
            self.values[key] = conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for '{key}': {raw!r} ({exc})") from None

    def set_pair(self, text: str) -> None:
        if "=" not in text:
            raise ConfigError(f"expected key=value, got {text!r}")
        key, raw = text.split("=", 1)
        self.set(key, raw.strip())

    def load_file(self, path) -> None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key == "preset":
                self.preset = raw.strip()
            else:
                self.set(key, raw.strip())

    def get(self, key: str):
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    def system_params(self) -> SystemParams:
        try:
            base = get_preset(self.preset)
        except InvalidParameterError as exc:
            raise ConfigError(str(exc)) from None
        sys_kw = {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("system.")}
        dets = []
        for i, det in ((1, base.detector1), (2, base.detector2)):
            kw = {}
            for short, attr in (("eta", "eta_fitted"), ("dcr", "dcr"), ("window_factor", "window_efficiency_factor")):
                k = f"detector{i}.{short}"
                if k in self.values:
                    kw[attr] = self.values[k]
            dets.append(DetectorParams(**{**vars(det), **kw}) if kw else det)
        return replace(base, detector1=dets[0], detector2=dets[1], **sys_kw)

    def channel(self) -> ChannelSpec:
        loss = self.values.get("channel.loss_db")
        length = self.values.get("channel.length_km")
        att = self.values.get("channel.attenuation_db_per_km")
        if length is not None or att is not None:
            if length is None or att is None:
                raise ConfigError("channel.length_km and channel.attenuation_db_per_km go together")
            if loss is None:
                return ChannelSpec.from_fiber(length, att)
            return ChannelSpec(loss, length, att)
        if loss is None:
            raise ConfigError("channel.loss_db is required")
        return ChannelSpec(loss)

    def resolved(self) -> dict:
        """Every key with its effective value, for output metadata."""
        out = {"preset": self.preset}
        for key in SCHEMA:
            v = self.get(key)
            if v is not None:
                out[key] = v
        return out
