"""Stochastic simulation of the DPS-QKD link.

Alice sends one weak coherent pulse per clock slot with phase 0 or pi; Bob's
one-bit-delay interferometer routes each detected pulse pair to D1 (phase
difference 0) or D2 (phase difference pi). Detection is modeled per slot as
a Bernoulli event with the closed-form click probabilities of
:mod:`dpsqkd.model`; dark counts fire independently on each detector; one
dead time is shared by both detectors.

Two samplers are provided:

``simulate_pulse_level``
    Independent per-slot trials for the signal and each detector's dark
    counts, merged and filtered by dead time. ``method="sparse"`` draws the
    trial successes by geometric skipping (exact, fast at high loss);
    ``method="dense"`` walks every slot through the compiled kernel.
``simulate_event_driven``
    Draws inter-click gaps directly from the merged click probability.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import rng
from ._kernels import DET_D1, DET_D2, ORIGIN_DARK, ORIGIN_SIGNAL, backend, dead_time_filter, dense_link
from .errors import InvalidParameterError
from .model import click_probability
from .params import ChannelSpec, SystemParams

__all__ = [
    "DET_D1", "DET_D2", "ORIGIN_SIGNAL", "ORIGIN_DARK",
    "PhaseSequence", "ClickEvent", "ClickStream", "SiftedKeyPair",
    "simulate_pulse_level", "simulate_event_driven", "sift", "empirical_rates",
]

MAX_SLOTS = 2 ** 62
DEAD_TIME_WARN = 0.01


@dataclass(frozen=True)
class PhaseSequence:
    """Alice's phase bits, one per slot; bit ``b`` means phase ``b * pi``.

    Seeded sequences are evaluated lazily from the counter hash, so a run of
    10**11 slots needs no per-slot storage.
    """

    length: int
    key: int | None = None
    explicit: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_seed(cls, seed: int, length: int) -> "PhaseSequence":
        return cls(int(length), key=rng.stream_key(seed, rng.TAG_PHASE))

    @classmethod
    def from_bits(cls, bits) -> "PhaseSequence":
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1 or np.any(arr > 1):
            raise InvalidParameterError("phase bits must be a 1-D sequence of 0/1")
        return cls(arr.size, explicit=arr)

    def bits_at(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.length):
            raise IndexError("slot index outside the phase sequence")
        if self.explicit is not None:
            return self.explicit[idx]
        return rng.bits(self.key, idx)

    def diff_at(self, idx) -> np.ndarray:
        """Phase difference bit ``phi[i] xor phi[i-1]`` at each slot ``i >= 1``."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and idx.min() < 1:
            raise IndexError("slot 0 has no preceding pulse")
        return self.bits_at(idx) ^ self.bits_at(idx - 1)

    def to_array(self) -> np.ndarray:
        return self.bits_at(np.arange(self.length))


class ClickEvent(NamedTuple):
    slot_index: int
    detector: int
    origin: int


@dataclass
class ClickStream:
    """Registered clicks in slot order, with simulation ground truth."""

    slots: np.ndarray
    detectors: np.ndarray
    origins: np.ndarray
    duration_slots: int
    params: SystemParams
    channel: ChannelSpec
    seed: int
    kernel: str
    generator: str = rng.GENERATOR_NAME

    def __len__(self) -> int:
        return int(self.slots.size)

    def __iter__(self) -> Iterator[ClickEvent]:
        for s, d, o in zip(self.slots.tolist(), self.detectors.tolist(), self.origins.tolist()):
            yield ClickEvent(s, d, o)

    @property
    def events(self) -> list[ClickEvent]:
        return list(self)

    @property
    def duration_s(self) -> float:
        return self.duration_slots / self.params.clock_rate_hz

    @property
    def n_signal(self) -> int:
        return int(np.count_nonzero(self.origins == ORIGIN_SIGNAL))

    @property
    def n_dark(self) -> int:
        return int(np.count_nonzero(self.origins == ORIGIN_DARK))

    def gaps(self) -> np.ndarray:
        return np.diff(self.slots)

    def check(self) -> None:
        """Raise AssertionError if a stream invariant is violated."""
        assert self.slots.size == self.detectors.size == self.origins.size
        if self.slots.size:
            assert self.slots[0] >= 1
            assert np.all(np.diff(self.slots) >= _min_gap(self.params))
        assert self.n_signal + self.n_dark == len(self)

    def summary(self) -> dict:
        return {
            "kernel": self.kernel,
            "generator": self.generator,
            "seed": self.seed,
            "duration_slots": self.duration_slots,
            "duration_s": self.duration_s,
            "clicks": len(self),
            "clicks_d1": int(np.count_nonzero(self.detectors == DET_D1)),
            "clicks_d2": int(np.count_nonzero(self.detectors == DET_D2)),
            "signal_clicks": self.n_signal,
            "dark_clicks": self.n_dark,
        }


@dataclass
class SiftedKeyPair:
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    slot_indices: np.ndarray
    origins: np.ndarray | None = None

    def __post_init__(self):
        self.alice_bits = np.asarray(self.alice_bits, dtype=np.uint8)
        self.bob_bits = np.asarray(self.bob_bits, dtype=np.uint8)
        self.slot_indices = np.asarray(self.slot_indices, dtype=np.int64)
        if not (self.alice_bits.size == self.bob_bits.size == self.slot_indices.size):
            raise InvalidParameterError("alice, bob and slot arrays must have equal length")

    def __len__(self) -> int:
        return int(self.alice_bits.size)

    @property
    def errors(self) -> np.ndarray:
        return self.alice_bits != self.bob_bits

    @property
    def measured_qber(self) -> float | None:
        if len(self) == 0:
            return None
        return float(np.count_nonzero(self.errors)) / len(self)

    def subset(self, mask) -> "SiftedKeyPair":
        return SiftedKeyPair(
            self.alice_bits[mask], self.bob_bits[mask], self.slot_indices[mask],
            None if self.origins is None else self.origins[mask],
        )


def _min_gap(params: SystemParams) -> int:
    # slots are distinct anyway, so a zero dead time still means gap >= 1
    return max(params.dead_slots, 1)


def _check_slots(n_slots) -> int:
    if int(n_slots) != n_slots:
        raise InvalidParameterError(f"n_slots must be an integer, got {n_slots}")
    n_slots = int(n_slots)
    if n_slots > MAX_SLOTS:
        raise OverflowError(f"n_slots {n_slots} exceeds the addressable range {MAX_SLOTS}")
    if n_slots < 2:
        raise InvalidParameterError(f"n_slots must be >= 2, got {n_slots}")
    return n_slots


def _bernoulli_slots(gen: np.random.Generator, p: float, first: int, stop: int) -> np.ndarray:
    """Slots in ``[first, stop)`` where an independent Bernoulli(p) trial succeeds."""
    if p <= 0.0 or stop <= first:
        return np.zeros(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(first, stop, dtype=np.int64)
    n = stop - first
    out = []
    pos = first - 1
    while True:
        expect = p * (stop - pos)
        batch = int(expect + 6.0 * math.sqrt(expect) + 64)
        steps = gen.geometric(p, size=batch).astype(np.int64)
        slots = pos + np.cumsum(steps)
        inside = slots[slots < stop]
        out.append(inside)
        if inside.size < slots.size or n == 0:
            break
        pos = int(slots[-1])
    return np.concatenate(out)


def _sparse_link(params, p_signal, n_slots, seed, phases):
    p_d1 = params.detector1.dcr * params.time_window_s
    p_d2 = params.detector2.dcr * params.time_window_s
    sig = _bernoulli_slots(rng.generator(seed, rng.TAG_SIGNAL), p_signal, 1, n_slots)
    d1 = _bernoulli_slots(rng.generator(seed, rng.TAG_DARK1), p_d1, 1, n_slots)
    d2 = _bernoulli_slots(rng.generator(seed, rng.TAG_DARK2), p_d2, 1, n_slots)

    wrong = rng.generator(seed, rng.TAG_ERROR).random(sig.size) < params.baseline_error
    sig_det = (phases.diff_at(sig) ^ wrong).astype(np.int8)

    slots = np.concatenate([sig, d1, d2])
    dets = np.concatenate([sig_det, np.full(d1.size, DET_D1, np.int8), np.full(d2.size, DET_D2, np.int8)])
    orgs = np.concatenate([np.full(sig.size, ORIGIN_SIGNAL, np.int8),
                           np.full(d1.size + d2.size, ORIGIN_DARK, np.int8)])
    # stable sort keeps candidate order signal, D1 dark, D2 dark within a slot
    order = np.argsort(slots, kind="stable")
    slots, dets, orgs = slots[order], dets[order], orgs[order]

    if slots.size > 1:
        first = np.ones(slots.size, dtype=bool)
        first[1:] = slots[1:] != slots[:-1]
        starts = np.flatnonzero(first)
        counts = np.diff(np.append(starts, slots.size))
        pick = starts.copy()
        multi = counts > 1
        if multi.any():
            u = rng.uniform(rng.stream_key(seed, rng.TAG_TIE), slots[starts[multi]])
            pick[multi] += (u * counts[multi]).astype(np.int64)
        slots, dets, orgs = slots[pick], dets[pick], orgs[pick]

    keep, _ = dead_time_filter(slots, _min_gap(params))
    return slots[keep], dets[keep], orgs[keep]


def simulate_pulse_level(params: SystemParams, channel: ChannelSpec, n_slots: int, seed: int,
                         method: str = "sparse") -> tuple[ClickStream, PhaseSequence]:
    """Simulate ``n_slots`` clock slots of the link.

    Parameters
    ----------
    params, channel : SystemParams, ChannelSpec
        Link constants and channel loss.
    n_slots : int
        Number of pulses Alice sends; detection starts at slot 1.
    seed : int
        Unsigned 64-bit seed. Identical inputs give identical streams.
    method : {"sparse", "dense"}
        ``"dense"`` evaluates every slot through the compiled kernel and is
        only practical up to ~1e9 slots.

    Returns
    -------
    (ClickStream, PhaseSequence)
    """
    n_slots = _check_slots(n_slots)
    seed = rng.check_seed(seed)
    p_signal, _, _ = click_probability(params, channel)
    phases = PhaseSequence.from_seed(seed, n_slots)
    if method == "sparse":
        slots, dets, orgs = _sparse_link(params, p_signal, n_slots, seed, phases)
        kernel = "pulse-sparse"
    elif method == "dense":
        keys = [phases.key] + [rng.stream_key(seed, t) for t in
                               (rng.TAG_SIGNAL, rng.TAG_ERROR, rng.TAG_DARK1, rng.TAG_DARK2, rng.TAG_TIE)]
        probs = (p_signal, params.baseline_error,
                 params.detector1.dcr * params.time_window_s,
                 params.detector2.dcr * params.time_window_s)
        slots, dets, orgs = dense_link(n_slots, keys, probs, _min_gap(params))
        kernel = f"pulse-dense[{backend()}]"
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    stream = ClickStream(slots, dets, orgs, n_slots, params, channel, seed, kernel)
    return stream, phases


def simulate_event_driven(params: SystemParams, channel: ChannelSpec, duration_s: float,
                          seed: int) -> ClickStream:
    """Sample clicks gap by gap instead of slot by slot.

    After a registered click the next one is the first success at or beyond
    the end of the dead time; by memorylessness of the per-slot trials that
    gap is ``dead_slots - 1 + Geometric(p_click)``, the same law a redraw of
    short gaps would give.
    """
    if not duration_s > 0 or not math.isfinite(duration_s):
        raise InvalidParameterError(f"duration_s must be positive and finite, got {duration_s}")
    seed = rng.check_seed(seed)
    n_slots = _check_slots(max(2, int(round(duration_s * params.clock_rate_hz))))
    p_signal, p_dark, p_click = click_probability(params, channel)
    if p_click * params.clock_rate_hz * params.dead_time_s > DEAD_TIME_WARN:
        warnings.warn("dead time is not small against the mean click interval; "
                      "the analytic dead-time correction becomes approximate", RuntimeWarning)
    empty = np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(0, np.int8)
    if p_click <= 0.0:
        return ClickStream(*empty, n_slots, params, channel, seed, "event-driven")

    gen = rng.generator(seed, rng.TAG_EVENT)
    shift = _min_gap(params) - 1
    pieces = []
    pos = 0
    first = True
    while pos < n_slots:
        expect = (n_slots - pos) / (shift + 1.0 / p_click)
        batch = int(expect + 6.0 * math.sqrt(expect) + 64)
        steps = gen.geometric(p_click, size=batch).astype(np.int64) + shift
        if first:
            steps[0] -= shift
            first = False
        slots = pos + np.cumsum(steps)
        inside = slots[slots < n_slots]
        pieces.append(inside)
        if inside.size < slots.size:
            break
        pos = int(slots[-1])
    slots = np.concatenate(pieces)

    u_origin = gen.random(slots.size)
    u_port = gen.random(slots.size)
    is_sig = u_origin < p_signal / p_click
    phases = PhaseSequence.from_seed(seed, n_slots)
    dets = np.empty(slots.size, dtype=np.int8)
    if is_sig.any():
        dets[is_sig] = phases.diff_at(slots[is_sig]) ^ (u_port[is_sig] < params.baseline_error)
    dcr_total = params.detector1.dcr + params.detector2.dcr
    p_d2 = params.detector2.dcr / dcr_total if dcr_total > 0 else 0.5
    dets[~is_sig] = np.where(u_port[~is_sig] < p_d2, DET_D2, DET_D1)
    orgs = np.where(is_sig, ORIGIN_SIGNAL, ORIGIN_DARK).astype(np.int8)
    return ClickStream(slots, dets, orgs, n_slots, params, channel, seed, "event-driven")


def event_phases(stream: ClickStream) -> PhaseSequence:
    """The phase sequence an event-driven stream was generated against."""
    return PhaseSequence.from_seed(stream.seed, stream.duration_slots)


def sift(stream: ClickStream, phases: PhaseSequence) -> SiftedKeyPair:
    """Form the sifted key from Bob's announced click slots.

    Alice's bit is the phase difference at the slot; Bob's bit is 0 for D1
    and 1 for D2.
    """
    slots = stream.slots
    if slots.size and (slots.max() >= phases.length or slots.min() < 1):
        raise IndexError("click references a slot with no phase (or no predecessor)")
    alice = phases.diff_at(slots).astype(np.uint8)
    bob = (stream.detectors == DET_D2).astype(np.uint8)
    return SiftedKeyPair(alice, bob, slots.copy(), stream.origins.copy())


def empirical_rates(pair: SiftedKeyPair, duration_s: float) -> tuple[float, float | None]:
    if not duration_s > 0:
        raise InvalidParameterError(f"duration_s must be > 0, got {duration_s}")
    return len(pair) / duration_s, pair.measured_qber
