"""Hot loops, each in a numba ``@njit`` form and a pure-numpy form.

The backend is chosen per call by the ``DPSQKD_BACKEND`` environment
variable (``numba`` or ``numpy``); the default is numba when it imports.
Both forms consume the same counter-hash draws and return bit-identical
results, which the test suite checks.
"""
from __future__ import annotations

import os

import numpy as np

from .rng import GOLDEN, MUL1, MUL2, mix64

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


BACKEND_ENV = "DPSQKD_BACKEND"


def backend() -> str:
    """Return ``"numba"`` or ``"numpy"`` for the current process environment."""
    want = os.environ.get(BACKEND_ENV, "").strip().lower()
    if want in ("numpy", "python", "0", "off", "no"):
        return "numpy"
    if want not in ("", "numba", "1", "on", "yes"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {want!r}")
    return "numba" if HAVE_NUMBA else "numpy"


_U64_1 = np.uint64(1)
_U64_11 = np.uint64(11)
_U64_27 = np.uint64(27)
_U64_30 = np.uint64(30)
_U64_31 = np.uint64(31)
_U64_63 = np.uint64(63)
_TWO_M53 = 2.0 ** -53

DET_D1 = 0
DET_D2 = 1
ORIGIN_SIGNAL = 0
ORIGIN_DARK = 1


# ---------------------------------------------------------------------------
# dead time on a merged click stream
# ---------------------------------------------------------------------------

@njit(cache=True)
def _dead_time_nb(slots, min_gap, last):
    keep = np.zeros(slots.shape[0], dtype=np.bool_)
    for i in range(slots.shape[0]):
        if slots[i] - last >= min_gap:
            keep[i] = True
            last = slots[i]
    return keep, last


def _dead_time_np(slots, min_gap, last):
    n = slots.shape[0]
    if n == 0:
        return np.zeros(0, dtype=bool), last
    prev = np.empty(n, dtype=np.int64)
    prev[0] = last
    prev[1:] = slots[:-1]
    # a candidate far enough from its predecessor candidate is always accepted
    keep = (slots - prev) >= min_gap
    loose = np.flatnonzero(~keep)
    if loose.size:
        anchor_at = np.where(keep, np.arange(n), -1)
        np.maximum.accumulate(anchor_at, out=anchor_at)
        cur = last
        for j in loose:
            a = anchor_at[j]
            if a >= 0 and slots[a] > cur:
                cur = slots[a]
            if slots[j] - cur >= min_gap:
                keep[j] = True
                cur = slots[j]
    acc = np.flatnonzero(keep)
    return keep, (int(slots[acc[-1]]) if acc.size else last)


def dead_time_filter(slots: np.ndarray, min_gap: int, last: int = -(2 ** 62)):
    """Mask of clicks that survive a shared, non-extending dead time.

    ``last`` is the slot of the most recent accepted click before ``slots``.
    Returns ``(mask, new_last)``.
    """
    slots = np.ascontiguousarray(slots, dtype=np.int64)
    if backend() == "numba":
        keep, new_last = _dead_time_nb(slots, np.int64(min_gap), np.int64(last))
        return keep, int(new_last)
    return _dead_time_np(slots, int(min_gap), int(last))


# ---------------------------------------------------------------------------
# per-slot brute-force link simulation
# ---------------------------------------------------------------------------

@njit(inline="always")
def _mix_nb(key, i):
    z = key + (np.uint64(i) + _U64_1) * GOLDEN
    z = (z ^ (z >> _U64_30)) * MUL1
    z = (z ^ (z >> _U64_27)) * MUL2
    return z ^ (z >> _U64_31)


@njit(inline="always")
def _unif_nb(key, i):
    return np.float64(_mix_nb(key, i) >> _U64_11) * _TWO_M53


@njit(cache=True)
def _dense_nb(start, stop, keys, probs, min_gap, last, out_slot, out_det, out_org):
    k_phase, k_sig, k_err, k_d1, k_d2, k_tie = keys[0], keys[1], keys[2], keys[3], keys[4], keys[5]
    p_sig, e_s, p_d1, p_d2 = probs[0], probs[1], probs[2], probs[3]
    cap = out_slot.shape[0]
    n = 0
    cand_det = np.empty(3, dtype=np.int8)
    cand_org = np.empty(3, dtype=np.int8)
    i = start
    while i < stop:
        if n == cap:
            break
        m = 0
        if p_sig > 0.0 and _unif_nb(k_sig, i) < p_sig:
            dphi = (_mix_nb(k_phase, i) >> _U64_63) ^ (_mix_nb(k_phase, i - 1) >> _U64_63)
            wrong = 1 if _unif_nb(k_err, i) < e_s else 0
            cand_det[m] = np.int8(np.int64(dphi) ^ wrong)
            cand_org[m] = ORIGIN_SIGNAL
            m += 1
        if p_d1 > 0.0 and _unif_nb(k_d1, i) < p_d1:
            cand_det[m] = DET_D1
            cand_org[m] = ORIGIN_DARK
            m += 1
        if p_d2 > 0.0 and _unif_nb(k_d2, i) < p_d2:
            cand_det[m] = DET_D2
            cand_org[m] = ORIGIN_DARK
            m += 1
        if m > 0 and i - last >= min_gap:
            c = 0
            if m > 1:
                c = int(_unif_nb(k_tie, i) * m)
            out_slot[n] = i
            out_det[n] = cand_det[c]
            out_org[n] = cand_org[c]
            n += 1
            last = i
        i += 1
    return n, i, last


def _dense_np(start, stop, keys, probs, min_gap, last, chunk=1 << 20):
    k_phase, k_sig, k_err, k_d1, k_d2, k_tie = (int(k) for k in keys)
    p_sig, e_s, p_d1, p_d2 = probs
    out_s, out_d, out_o = [], [], []
    for lo in range(start, stop, chunk):
        idx = np.arange(lo, min(lo + chunk, stop), dtype=np.int64)
        sig = _unif_np(k_sig, idx) < p_sig if p_sig > 0 else np.zeros(idx.size, bool)
        d1 = _unif_np(k_d1, idx) < p_d1 if p_d1 > 0 else np.zeros(idx.size, bool)
        d2 = _unif_np(k_d2, idx) < p_d2 if p_d2 > 0 else np.zeros(idx.size, bool)
        hit = sig | d1 | d2
        if not hit.any():
            continue
        where = np.flatnonzero(hit)
        slots = idx[where]
        keep, last = _dead_time_np(slots, min_gap, last)
        slots, where = slots[keep], where[keep]
        s, a = sig[where], d1[where]
        m = s.astype(np.int64) + a + d2[where]
        # candidate order is signal, dark D1, dark D2; tie picks the c-th present
        c = np.zeros(slots.size, dtype=np.int64)
        multi = m > 1
        if multi.any():
            c[multi] = (_unif_np(k_tie, slots[multi]) * m[multi]).astype(np.int64)
        sig_det = np.zeros(slots.size, dtype=np.int8)
        if s.any():
            ss = slots[s]
            dphi = (mix64(k_phase, ss) >> np.uint64(63)) ^ (mix64(k_phase, ss - 1) >> np.uint64(63))
            wrong = (_unif_np(k_err, ss) < e_s).astype(np.uint64)
            sig_det[s] = (dphi ^ wrong).astype(np.int8)
        # rank of each candidate among those present in the slot
        r_d1 = s.astype(np.int64)
        det = np.where(s & (c == 0), sig_det, np.where(a & (c == r_d1), DET_D1, DET_D2)).astype(np.int8)
        org = np.where(s & (c == 0), ORIGIN_SIGNAL, ORIGIN_DARK).astype(np.int8)
        out_s.append(slots)
        out_d.append(det)
        out_o.append(org)
    if not out_s:
        return np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(0, np.int8)
    return np.concatenate(out_s), np.concatenate(out_d), np.concatenate(out_o)


def _unif_np(key, idx):
    return (mix64(key, idx) >> np.uint64(11)).astype(np.float64) * _TWO_M53


def dense_link(n_slots: int, keys, probs, min_gap: int):
    """Simulate slots ``1 .. n_slots-1`` one by one.

    ``keys`` are the counter-hash keys for (phase, signal, wrong-port,
    dark D1, dark D2, tie) and ``probs`` are (p_signal, e_s, p_dark1,
    p_dark2). Returns ``(slots, detector, origin)`` arrays.
    """
    keys_arr = np.array([int(k) for k in keys], dtype=np.uint64)
    probs_arr = np.array(probs, dtype=np.float64)
    last = -(2 ** 62)
    if backend() == "numpy":
        return _dense_np(1, int(n_slots), keys_arr, tuple(probs_arr), int(min_gap), last)
    cap = 1 << 16
    out_s, out_d, out_o = [], [], []
    i = 1
    while i < n_slots:
        buf_s = np.empty(cap, np.int64)
        buf_d = np.empty(cap, np.int8)
        buf_o = np.empty(cap, np.int8)
        n, i, last = _dense_nb(np.int64(i), np.int64(n_slots), keys_arr, probs_arr,
                               np.int64(min_gap), np.int64(last), buf_s, buf_d, buf_o)
        out_s.append(buf_s[:n])
        out_d.append(buf_d[:n])
        out_o.append(buf_o[:n])
    if not out_s:
        return np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(0, np.int8)
    return np.concatenate(out_s), np.concatenate(out_d), np.concatenate(out_o)


# ---------------------------------------------------------------------------
# Toeplitz matrix-vector product over GF(2)
# ---------------------------------------------------------------------------

def _pack_le(bits: np.ndarray, n_words: int) -> np.ndarray:
    padded = np.zeros(n_words * 64, dtype=np.uint8)
    padded[: bits.size] = bits
    return np.packbits(padded, bitorder="little").view("<u8").astype(np.uint64)


@njit(cache=True)
def _toeplitz_nb(s_words, x_words, n_words, out_len):
    out = np.zeros(out_len, dtype=np.uint8)
    for j in range(out_len):
        o = out_len - 1 - j
        q = o >> 6
        r = np.uint64(o & 63)
        acc = np.uint64(0)
        for w in range(n_words):
            if r == 0:
                win = s_words[q + w]
            else:
                win = (s_words[q + w] >> r) | (s_words[q + w + 1] << (np.uint64(64) - r))
            acc ^= win & x_words[w]
        acc ^= acc >> np.uint64(32)
        acc ^= acc >> np.uint64(16)
        acc ^= acc >> np.uint64(8)
        acc ^= acc >> np.uint64(4)
        acc ^= acc >> np.uint64(2)
        acc ^= acc >> np.uint64(1)
        out[j] = np.uint8(acc & _U64_1)
    return out


def _toeplitz_np(diag, x, out_len):
    n = x.size
    if n * out_len <= 1 << 22:
        full = np.convolve(diag.astype(np.int64), x.astype(np.int64))
    else:
        size = diag.size + n - 1
        nfft = 1 << (size - 1).bit_length()
        full = np.rint(np.fft.irfft(np.fft.rfft(diag, nfft) * np.fft.rfft(x, nfft), nfft)[:size])
        full = full.astype(np.int64)
    return (full[n - 1: n - 1 + out_len] & 1).astype(np.uint8)


def toeplitz_mult(diag: np.ndarray, x: np.ndarray, out_len: int) -> np.ndarray:
    """Compute ``T @ x mod 2`` with ``T[j, k] = diag[j - k + n - 1]``.

    ``diag`` holds the ``out_len + n - 1`` values of the matrix diagonals,
    from the bottom-left corner (index 0) to the top-right corner.
    """
    x = np.ascontiguousarray(x, dtype=np.uint8)
    diag = np.ascontiguousarray(diag, dtype=np.uint8)
    n = x.size
    if out_len == 0 or n == 0:
        return np.zeros(out_len, dtype=np.uint8)
    if diag.size != out_len + n - 1:
        raise ValueError("diag must have out_len + n - 1 entries")
    if backend() == "numpy":
        return _toeplitz_np(diag, x, out_len)
    # row j reads diag reversed, starting at offset out_len - 1 - j
    n_words = (n + 63) // 64
    s_words = _pack_le(diag[::-1], (diag.size + 63) // 64 + 1)
    x_words = _pack_le(x, n_words)
    return _toeplitz_nb(s_words, x_words, n_words, out_len)
