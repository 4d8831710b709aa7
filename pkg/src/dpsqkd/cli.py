"""Command-line front end.

Subcommands: ``analytic``, ``simulate``, ``sweep``, ``reproduce``, ``distill``.
Output is CSV (``#``-prefixed metadata lines, then a header row) or a
plain-text report. Exit status: 0 success, 2 configuration error, 3 model or
runtime domain error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, rng
from ._kernels import backend
from .config import RunConfig
from .errors import ConfigError, InvalidParameterError, ModelDomainError
from .experiments import reproduce_table1, sweep_loss
from .model import analytic_point, security_threshold
from .params import EtaComposition
from .postprocess import distill, key_to_bytes, key_to_hex
from .sim import SiftedKeyPair, empirical_rates, event_phases, sift, simulate_event_driven, simulate_pulse_level

EXIT_CONFIG = 2
EXIT_DOMAIN = 3

SWEEP_COLUMNS = ["loss_db", "p_click", "sifted_bps", "qber", "secure_bps"]
ANALYTIC_COLUMNS = ["loss_db", "p_signal", "p_dark", "p_click", "sifted_bps", "qber",
                    "secure_fraction", "secure_bps", "eta_composition"]
SIMULATE_COLUMNS = ["seed", "kernel", "duration_s", "clicks", "signal_clicks", "dark_clicks",
                    "sifted_length", "sifted_bps", "qber", "analytic_sifted_bps", "analytic_qber",
                    "secure_length", "secure_bps", "status"]
DISTILL_COLUMNS = ["sifted_length", "qber_est", "remaining_length", "leaked_bits", "secure_fraction",
                   "secure_length", "secure_bps", "hash_seed", "status"]
SIFTED_COLUMNS = ["slot", "alice", "bob"]


def fmt(x) -> str:
    """Locale-independent number formatting, 9 significant digits."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".9g")
    return str(x)


def pct(q) -> str:
    if q is None or (isinstance(q, float) and math.isnan(q)):
        return "n/a"
    return format(100.0 * q, ".4g") + " %"


class Output:
    """Collects text and writes it to a file or stdout in one piece."""

    def __init__(self):
        self.lines: list[str] = []

    def add(self, line: str = "") -> None:
        self.lines.append(line)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def metadata(out: Output, command: str, cfg: RunConfig, seeds=None, extra=None, prefix="# ") -> None:
    out.add(f"{prefix}dpsqkd {__version__} {command}")
    out.add(f"{prefix}generator = {rng.GENERATOR_NAME}")
    out.add(f"{prefix}backend = {backend()}")
    if seeds is not None:
        out.add(f"{prefix}seeds = {' '.join(str(s) for s in seeds)}")
    for k, v in cfg.resolved().items():
        out.add(f"{prefix}config.{k} = {fmt(v)}")
    try:
        params = cfg.system_params().to_dict()
        out.add(f"{prefix}params = {json.dumps(params, sort_keys=True)}")
    except (ConfigError, InvalidParameterError):
        pass
    for k, v in (extra or {}).items():
        out.add(f"{prefix}{k} = {fmt(v)}")


def csv_table(out: Output, columns, rows) -> None:
    out.add(",".join(columns))
    for row in rows:
        out.add(",".join(fmt(row.get(c)) for c in columns))


def _seeds(cfg: RunConfig) -> list[int]:
    n = cfg.get("sim.seeds")
    if n < 1:
        raise ConfigError("sim.seeds must be >= 1")
    base = rng.check_seed(cfg.get("sim.seed"))
    return [base + i for i in range(n)]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_analytic(cfg: RunConfig) -> Output:
    params, channel = cfg.system_params(), cfg.channel()
    p = analytic_point(params, channel)
    row = {"loss_db": p.loss_db, "p_signal": p.p_signal, "p_dark": p.p_dark, "p_click": p.p_click,
           "sifted_bps": p.sifted_rate_bps, "qber": p.qber, "secure_fraction": p.secure_fraction,
           "secure_bps": p.secure_rate_bps, "eta_composition": params.eta_composition.value}
    out = Output()
    if cfg.get("output.format") == "csv":
        metadata(out, "analytic", cfg)
        csv_table(out, ANALYTIC_COLUMNS, [row])
    else:
        metadata(out, "analytic", cfg, prefix="")
        out.add("")
        for c in ANALYTIC_COLUMNS:
            out.add(f"{c}: {pct(row[c]) if c == 'qber' else fmt(row[c])}")
    return out


def _write_key(path: str, bits, key_format: str) -> None:
    if key_format == "bin":
        Path(path).write_bytes(key_to_bytes(bits))
    else:
        Path(path).write_text(key_to_hex(bits) + "\n")


def _key_path(base: str, seed: int, multi: bool) -> str:
    return f"{base}.seed{seed}" if multi else base


def _write_sifted(path: str, pair: SiftedKeyPair, cfg: RunConfig, seed: int, duration_s: float) -> None:
    out = Output()
    metadata(out, "sifted-key", cfg, seeds=[seed], extra={"duration_s": duration_s})
    out.add(",".join(SIFTED_COLUMNS))
    for s, a, b in zip(pair.slot_indices.tolist(), pair.alice_bits.tolist(), pair.bob_bits.tolist()):
        out.add(f"{s},{a},{b}")
    Path(path).write_text(out.text())


def cmd_simulate(cfg: RunConfig) -> Output:
    params, channel = cfg.system_params(), cfg.channel()
    seeds = _seeds(cfg)
    kernel = cfg.get("sim.kernel")
    duration = cfg.get("sim.duration_s")
    n_slots = cfg.get("sim.n_slots")
    if n_slots is None:
        if not duration > 0 or not math.isfinite(duration):
            raise ConfigError(f"sim.duration_s must be > 0, got {fmt(duration)}")
        n_slots = int(round(duration * params.clock_rate_hz))
    elif kernel == "event":
        raise ConfigError("sim.n_slots applies to the pulse and dense kernels only")
    if n_slots < 2:
        raise ConfigError("simulation needs at least 2 slots")
    frac = cfg.get("sim.sample_fraction")
    if not 0 < frac <= 1:
        raise ConfigError("sim.sample_fraction must be in (0, 1]")
    point = analytic_point(params, channel)
    rows = []
    multi = len(seeds) > 1
    for seed in seeds:
        if kernel == "event":
            stream = simulate_event_driven(params, channel, n_slots / params.clock_rate_hz, seed)
            phases = event_phases(stream)
        else:
            method = "sparse" if kernel == "pulse" else "dense"
            stream, phases = simulate_pulse_level(params, channel, n_slots, seed, method=method)
        pair = sift(stream, phases)
        rate, qber = empirical_rates(pair, stream.duration_s)
        rep = distill(pair, params, sample_fraction=frac, seed=seed)
        rows.append({
            "seed": seed, "kernel": stream.kernel.split("[")[0], "duration_s": stream.duration_s,
            "clicks": len(stream), "signal_clicks": stream.n_signal, "dark_clicks": stream.n_dark,
            "sifted_length": len(pair), "sifted_bps": rate, "qber": qber,
            "analytic_sifted_bps": point.sifted_rate_bps, "analytic_qber": point.qber,
            "secure_length": rep.secure_length, "secure_bps": rep.secure_rate(stream.duration_s),
            "status": rep.status,
        })
        if cfg.get("output.key_path"):
            _write_key(_key_path(cfg.get("output.key_path"), seed, multi), rep.final_key,
                       cfg.get("output.key_format"))
        if cfg.get("output.sifted_path"):
            _write_sifted(_key_path(cfg.get("output.sifted_path"), seed, multi), pair, cfg, seed,
                          stream.duration_s)
    out = Output()
    if cfg.get("output.format") == "csv":
        metadata(out, "simulate", cfg, seeds)
        csv_table(out, SIMULATE_COLUMNS, rows)
    else:
        metadata(out, "simulate", cfg, seeds, prefix="")
        for row in rows:
            out.add("")
            out.add(f"[seed {row['seed']}]")
            for c in SIMULATE_COLUMNS[1:]:
                v = row[c]
                out.add(f"{c}: {pct(v) if c in ('qber', 'analytic_qber') else fmt(v)}")
    return out


def cmd_sweep(cfg: RunConfig) -> Output:
    params = cfg.system_params()
    res = sweep_loss(params, (cfg.get("sweep.loss_min_db"), cfg.get("sweep.loss_max_db")),
                     cfg.get("sweep.step_db"))
    rows = [{"loss_db": p.loss_db, "p_click": p.p_click, "sifted_bps": p.sifted_rate_bps,
             "qber": p.qber, "secure_bps": p.secure_rate_bps} for p in res.points]
    extra = {"zero_crossing_loss_db": res.zero_crossing_db,
             "eta_composition": params.eta_composition.value}
    out = Output()
    if cfg.get("output.format") == "csv":
        metadata(out, "sweep", cfg, extra=extra)
        csv_table(out, SWEEP_COLUMNS, rows)
    else:
        metadata(out, "sweep", cfg, extra=extra, prefix="")
        out.add("")
        out.add(f"{'loss_db':>10} {'p_click':>16} {'sifted_bps':>16} {'qber':>10} {'secure_bps':>16}")
        for r in rows:
            out.add(f"{fmt(r['loss_db']):>10} {fmt(r['p_click']):>16} {fmt(r['sifted_bps']):>16} "
                    f"{pct(r['qber']):>10} {fmt(r['secure_bps']):>16}")
    return out


def _reproduce_columns(multi: bool) -> list[str]:
    cols = ["scenario", "eta_composition", "loss_db", "dcr", "duration_s",
            "published_sifted_bps", "published_qber", "published_secure_bps",
            "analytic_sifted_bps", "analytic_qber", "analytic_secure_bps",
            "sim_sifted_bps", "sim_sifted_stderr", "sim_qber", "sim_qber_stderr",
            "sim_secure_bps", "sim_secure_stderr", "rederived_secure_bps",
            "check_eq4", "check_sifted_factor2", "check_qber_side", "check_sim_sifted", "check_sim_qber",
            "pass"]
    if not multi:
        cols = [c for c in cols if not c.endswith("_stderr")]
    return cols


def cmd_reproduce(cfg: RunConfig) -> Output:
    seeds = _seeds(cfg)
    comp = (cfg.get("reproduce.composition") or cfg.get("system.eta_composition")
            or EtaComposition.SUM.value)
    report = reproduce_table1(len(seeds), composition=EtaComposition(comp), base_seed=seeds[0])
    rows = []
    for r in report.rows:
        pub = r.scenario.published
        sm, sse = r.simulated.sifted
        qm, qse = r.simulated.qber
        km, kse = r.simulated.secure
        row = {
            "scenario": r.scenario.name, "eta_composition": r.scenario.params.eta_composition.value,
            "loss_db": r.scenario.channel.loss_db, "dcr": r.scenario.params.dcr_mean,
            "duration_s": r.simulated.duration_s,
            "published_sifted_bps": pub.sifted_rate_bps.value if pub and pub.sifted_rate_bps else None,
            "published_qber": pub.qber.value if pub and pub.qber else None,
            "published_secure_bps": pub.secure_rate_bps.value if pub and pub.secure_rate_bps else None,
            "analytic_sifted_bps": r.analytic.sifted_rate_bps, "analytic_qber": r.analytic.qber,
            "analytic_secure_bps": r.analytic.secure_rate_bps,
            "sim_sifted_bps": sm, "sim_sifted_stderr": sse, "sim_qber": qm, "sim_qber_stderr": qse,
            "sim_secure_bps": km, "sim_secure_stderr": kse,
            "rederived_secure_bps": r.rederived_secure_bps, "pass": r.passed,
        }
        for name in ("eq4", "sifted_factor2", "qber_side", "sim_sifted", "sim_qber"):
            row[f"check_{name}"] = r.checks.get(name)
        rows.append((r, row))
    multi = len(seeds) > 1
    out = Output()
    extra = {"kernel": report.kernel, "security_threshold": security_threshold()}
    if cfg.get("output.format") == "csv":
        metadata(out, "reproduce", cfg, seeds, extra=extra)
        csv_table(out, _reproduce_columns(multi), [row for _, row in rows])
        return out
    metadata(out, "reproduce", cfg, seeds, extra=extra, prefix="")
    for r, row in rows:
        sc = r.scenario
        out.add("")
        out.add(f"[{sc.name}] {'PASS' if r.passed else 'FAIL'}")
        out.add(f"source: {sc.published.source if sc.published else 'none'}")
        out.add(f"eta_composition: {row['eta_composition']}")
        out.add(f"params: {json.dumps(sc.params.to_dict(), sort_keys=True)}")
        out.add(f"loss_db: {fmt(sc.channel.loss_db)}")
        if sc.channel.has_provenance:
            out.add(f"fiber: {fmt(sc.channel.length_km)} km x {fmt(sc.channel.attenuation_db_per_km)} dB/km")
        out.add(f"duration_s per seed: {fmt(r.simulated.duration_s)}")
        out.add(f"published: sifted {fmt(row['published_sifted_bps']) or 'n/a'} bit/s, qber {pct(row['published_qber'])}, "
                f"secure {fmt(row['published_secure_bps']) or 'n/a'} bit/s")
        out.add(f"analytic: sifted {fmt(row['analytic_sifted_bps'])} bit/s, qber {pct(row['analytic_qber'])}, "
                f"secure {fmt(row['analytic_secure_bps'])} bit/s")
        sim_line = f"simulated: sifted {fmt(row['sim_sifted_bps'])}"
        if multi:
            sim_line += f" +- {fmt(row['sim_sifted_stderr'])}"
        sim_line += f" bit/s, qber {pct(row['sim_qber'])}"
        if multi:
            sim_line += f" +- {pct(row['sim_qber_stderr'])}"
        out.add(sim_line)
        out.add(f"rederived secure from published pair: {fmt(row['rederived_secure_bps'])} bit/s")
        for mode, vals in r.analytic_by_mode.items():
            out.add(f"analytic[{mode}]: sifted {fmt(vals['sifted_rate_bps'])} bit/s, qber {pct(vals['qber'])}")
        for name, ok in r.checks.items():
            out.add(f"check {name}: {'pass' if ok else 'fail'}")
    return out


def _read_sifted(path: str):
    slots, alice, bob = [], [], []
    duration = None
    header_seen = False
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("duration_s ="):
                duration = float(body.split("=", 1)[1])
            continue
        if not line.strip():
            continue
        if not header_seen:
            if line.strip().split(",") != SIFTED_COLUMNS:
                raise ConfigError(f"{path}: expected header {','.join(SIFTED_COLUMNS)}")
            header_seen = True
            continue
        s, a, b = line.split(",")
        slots.append(int(s))
        alice.append(int(a))
        bob.append(int(b))
    return SiftedKeyPair(np.array(alice, np.uint8), np.array(bob, np.uint8), np.array(slots, np.int64)), duration


def cmd_distill(cfg: RunConfig) -> Output:
    params = cfg.system_params()
    path = cfg.get("distill.input")
    if not path:
        raise ConfigError("distill needs distill.input (a sifted-key CSV written by simulate)")
    try:
        pair, duration = _read_sifted(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    duration = cfg.get("distill.duration_s") or duration
    frac = cfg.get("sim.sample_fraction")
    if not 0 < frac <= 1:
        raise ConfigError("sim.sample_fraction must be in (0, 1]")
    seed = rng.check_seed(cfg.get("sim.seed"))
    rep = distill(pair, params, sample_fraction=frac, seed=seed)
    row = rep.summary()
    row["secure_bps"] = rep.secure_rate(duration) if duration else None
    if cfg.get("output.key_path"):
        _write_key(cfg.get("output.key_path"), rep.final_key, cfg.get("output.key_format"))
    out = Output()
    if cfg.get("output.format") == "csv":
        metadata(out, "distill", cfg, [seed], extra={"reconciler": rep.reconciler})
        csv_table(out, DISTILL_COLUMNS, [row])
    else:
        metadata(out, "distill", cfg, [seed], prefix="")
        out.add("")
        for c in DISTILL_COLUMNS + ["message", "reconciler"]:
            out.add(f"{c}: {pct(row[c]) if c == 'qber_est' else fmt(row[c])}")
        out.add(f"final_key_hex: {key_to_hex(rep.final_key)}")
    return out


COMMANDS = {
    "analytic": (cmd_analytic, "evaluate the closed-form link model at one loss"),
    "simulate": (cmd_simulate, "simulate the link, sift and distill"),
    "sweep": (cmd_sweep, "analytic curves over a loss range"),
    "reproduce": (cmd_reproduce, "compare model and simulation with the published results"),
    "distill": (cmd_distill, "turn a sifted-key file into a final key"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", help="built-in parameter preset (paper-dcr001, paper-dcr004)")
    common.add_argument("--config", help="file of key = value lines")
    common.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--output", help="write output here instead of stdout")
    common.add_argument("--format", choices=["csv", "report"])
    common.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    common.add_argument("--seeds", type=int, help="number of seeds")
    common.add_argument("--input", help="sifted-key CSV for distill")
    p = argparse.ArgumentParser(prog="dpsqkd", description="DPS-QKD link model, simulator and key distillation")
    p.add_argument("--version", action="version", version=f"dpsqkd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return p


def make_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            cfg.load_file(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if args.preset:
        cfg.preset = args.preset
    for item in args.sets:
        cfg.set_pair(item)
    if args.format:
        cfg.set("output.format", args.format)
    if args.seed is not None:
        cfg.set("sim.seed", args.seed)
    if args.seeds is not None:
        cfg.set("sim.seeds", args.seeds)
    if args.input:
        cfg.set("distill.input", args.input)
    if args.output:
        cfg.set("output.path", args.output)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        out = COMMANDS[args.command][0](cfg)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"dpsqkd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelDomainError, OverflowError, IndexError, ValueError) as exc:
        print(f"dpsqkd: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    text = out.text()
    path = cfg.get("output.path")
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
