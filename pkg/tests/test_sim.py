import math

import numpy as np
import pytest
from scipy import stats

from dpsqkd import ChannelSpec, DetectorParams, InvalidParameterError, SystemParams, get_preset
from dpsqkd.model import analytic_point
from dpsqkd.sim import (
    DET_D1,
    DET_D2,
    ORIGIN_DARK,
    ORIGIN_SIGNAL,
    ClickStream,
    PhaseSequence,
    SiftedKeyPair,
    empirical_rates,
    event_phases,
    sift,
    simulate_event_driven,
    simulate_pulse_level,
)

NOISELESS = SystemParams(baseline_error=0.0,
                         detector1=DetectorParams(0.05, 0.0), detector2=DetectorParams(0.05, 0.0))


def within_3se_rate(stream, pair, point):
    rate, qber = empirical_rates(pair, stream.duration_s)
    n = len(pair)
    rate_se = math.sqrt(n) / stream.duration_s
    qber_se = math.sqrt(point.qber * (1 - point.qber) / n)
    return abs(rate - point.sifted_rate_bps) <= 3 * rate_se, abs(qber - point.qber) <= 3 * qber_se


@pytest.mark.parametrize("method", ["sparse", "dense"])
def test_noiseless_link(method):
    stream, phases = simulate_pulse_level(NOISELESS, ChannelSpec(20.0), 10 ** 6, seed=11, method=method)
    stream.check()
    pair = sift(stream, phases)
    assert len(pair) > 0
    assert pair.measured_qber == 0.0
    assert stream.n_dark == 0
    p_signal = analytic_point(NOISELESS, ChannelSpec(20.0)).p_signal
    expect = p_signal * 10 ** 6
    assert abs(len(pair) - expect) <= 3 * math.sqrt(expect)


def test_noiseless_event_driven():
    stream = simulate_event_driven(NOISELESS, ChannelSpec(30.0), 0.01, seed=2)
    assert len(stream) > 0
    assert sift(stream, event_phases(stream)).measured_qber == 0.0


def test_dark_only_link():
    p = SystemParams(mu=0.0, detector1=DetectorParams(0.05, 1e4), detector2=DetectorParams(0.05, 1e4))
    n = 10 ** 10
    stream, _ = simulate_pulse_level(p, ChannelSpec(10.0), n, seed=5)
    assert np.all(stream.origins == ORIGIN_DARK)
    p_slot = 2 * 1e4 * 100e-12
    sd = math.sqrt(n * p_slot * (1 - p_slot))
    assert abs(len(stream) - n * p_slot) <= 3 * sd


def test_30db_preset_1e9_slots():
    p, ch = get_preset("paper-dcr004"), ChannelSpec(30.0)
    stream, phases = simulate_pulse_level(p, ch, 10 ** 9, seed=30)
    stream.check()
    ok_rate, ok_qber = within_3se_rate(stream, sift(stream, phases), analytic_point(p, ch))
    assert ok_rate and ok_qber


def test_dense_kernel_against_analytic():
    p, ch = get_preset("paper-dcr004"), ChannelSpec(20.0)
    stream, phases = simulate_pulse_level(p, ch, 2 * 10 ** 8, seed=4, method="dense")
    stream.check()
    ok_rate, ok_qber = within_3se_rate(stream, sift(stream, phases), analytic_point(p, ch))
    assert ok_rate and ok_qber


def test_sparse_and_dense_same_gap_law():
    # high click probability so dead time and ties both matter
    p = SystemParams(mu=0.2, baseline_error=0.02,
                     detector1=DetectorParams(0.5, 2e7), detector2=DetectorParams(0.5, 2e7))
    ch = ChannelSpec(3.0)
    a, _ = simulate_pulse_level(p, ch, 3 * 10 ** 6, seed=1, method="sparse")
    b, _ = simulate_pulse_level(p, ch, 3 * 10 ** 6, seed=2, method="dense")
    a.check(), b.check()
    assert stats.ks_2samp(a.gaps(), b.gaps()).pvalue > 0.01
    assert abs(a.n_dark / len(a) - b.n_dark / len(b)) < 0.02


@pytest.mark.parametrize("method", ["sparse", "dense"])
def test_determinism(method):
    p, ch = get_preset("paper-dcr001"), ChannelSpec(25.0)
    s1, ph1 = simulate_pulse_level(p, ch, 2 * 10 ** 6, 99, method=method)
    s2, ph2 = simulate_pulse_level(p, ch, 2 * 10 ** 6, 99, method=method)
    np.testing.assert_array_equal(s1.slots, s2.slots)
    np.testing.assert_array_equal(s1.detectors, s2.detectors)
    np.testing.assert_array_equal(s1.origins, s2.origins)
    k1, k2 = sift(s1, ph1), sift(s2, ph2)
    np.testing.assert_array_equal(k1.alice_bits, k2.alice_bits)
    np.testing.assert_array_equal(k1.bob_bits, k2.bob_bits)
    s3, _ = simulate_pulse_level(p, ch, 2 * 10 ** 6, 100, method=method)
    assert not np.array_equal(s1.slots, s3.slots)


def test_event_driven_determinism():
    p, ch = get_preset("paper-dcr001"), ChannelSpec(40.0)
    a = simulate_event_driven(p, ch, 100.0, 7)
    b = simulate_event_driven(p, ch, 100.0, 7)
    np.testing.assert_array_equal(a.slots, b.slots)
    np.testing.assert_array_equal(a.detectors, b.detectors)


def test_conditional_error_rates():
    p = SystemParams(baseline_error=0.01,
                     detector1=DetectorParams(0.067, 2e4), detector2=DetectorParams(0.04, 2e4))
    ch = ChannelSpec(40.0)
    stream, phases = simulate_pulse_level(p, ch, 10 ** 10, seed=8)
    pair = sift(stream, phases)
    for origin, want in ((ORIGIN_SIGNAL, 0.01), (ORIGIN_DARK, 0.5)):
        sel = pair.origins == origin
        n = int(sel.sum())
        assert n > 1000
        err = pair.errors[sel].mean()
        assert abs(err - want) <= 3 * math.sqrt(want * (1 - want) / n)


def test_event_driven_empty():
    p = SystemParams(mu=0.0, detector1=DetectorParams(0.05, 0.0), detector2=DetectorParams(0.05, 0.0))
    s = simulate_event_driven(p, ChannelSpec(10.0), 5.0, 1)
    assert len(s) == 0


def test_event_driven_72db_rate():
    p, ch = get_preset("paper-dcr001"), ChannelSpec(72.0)
    stream = simulate_event_driven(p, ch, 1e4, seed=72)
    stream.check()
    pair = sift(stream, event_phases(stream))
    point = analytic_point(p, ch)
    ok_rate, _ = within_3se_rate(stream, pair, point)
    assert ok_rate
    assert 0.2 <= point.sifted_rate_bps <= 0.31


def test_event_driven_dead_time_warning():
    p = SystemParams(detector1=DetectorParams(0.5, 0.0), detector2=DetectorParams(0.5, 0.0))
    with pytest.warns(RuntimeWarning):
        simulate_event_driven(p, ChannelSpec(0.0), 1e-5, 1)


def test_bad_inputs():
    p, ch = get_preset("paper-dcr001"), ChannelSpec(10.0)
    with pytest.raises(InvalidParameterError):
        simulate_pulse_level(p, ch, 1, 0)
    with pytest.raises(OverflowError):
        simulate_pulse_level(p, ch, 2 ** 63, 0)
    with pytest.raises(InvalidParameterError):
        simulate_event_driven(p, ch, 0.0, 0)
    with pytest.raises(InvalidParameterError):
        simulate_pulse_level(p, ch, 100, 0, method="bogus")
    with pytest.raises(ValueError):
        simulate_pulse_level(p, ch, 100, -1)


def _stream(slots, dets, orgs=None, n=10):
    slots = np.asarray(slots, np.int64)
    orgs = np.zeros(slots.size, np.int8) if orgs is None else np.asarray(orgs, np.int8)
    return ClickStream(slots, np.asarray(dets, np.int8), orgs, n, SystemParams(), ChannelSpec(0.0), 0, "manual")


def test_sift_empty():
    pair = sift(_stream([], []), PhaseSequence.from_bits([0, 1, 1]))
    assert len(pair) == 0 and pair.measured_qber is None
    rate, q = empirical_rates(pair, 10.0)
    assert rate == 0.0 and q is None


def test_sift_single_click_d1():
    phases = PhaseSequence.from_bits([1, 1, 0, 1])
    pair = sift(_stream([1], [DET_D1]), phases)
    assert pair.alice_bits.tolist() == [0] and pair.bob_bits.tolist() == [0]
    assert pair.measured_qber == 0.0
    pair = sift(_stream([2, 3], [DET_D2, DET_D1]), phases)
    assert pair.alice_bits.tolist() == [1, 1]
    assert pair.bob_bits.tolist() == [1, 0]
    assert pair.measured_qber == 0.5


def test_sift_out_of_range():
    with pytest.raises(IndexError):
        sift(_stream([5], [DET_D1]), PhaseSequence.from_bits([0, 1, 0]))


def test_phase_sequence_reproducible():
    a = PhaseSequence.from_seed(3, 1000).to_array()
    b = PhaseSequence.from_seed(3, 1000).to_array()
    np.testing.assert_array_equal(a, b)
    assert 400 < a.sum() < 600
    far = PhaseSequence.from_seed(3, 10 ** 12)
    np.testing.assert_array_equal(far.bits_at(np.arange(1000)), a)


def test_empirical_rates_arithmetic():
    pair = SiftedKeyPair(np.zeros(250, np.uint8), np.zeros(250, np.uint8), np.arange(1, 251))
    assert empirical_rates(pair, 250.0) == (1.0, 0.0)
    with pytest.raises(InvalidParameterError):
        empirical_rates(pair, 0.0)
