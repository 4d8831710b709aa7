"""Sifted key to final key: QBER estimation, reconciliation cost, privacy amplification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from ._kernels import toeplitz_mult
from .errors import InvalidParameterError
from .model import binary_entropy, secure_fraction, security_threshold, usable_fraction
from .params import SystemParams
from .sim import SiftedKeyPair

RECONCILER = "idealized-shannon: Bob's key replaced by Alice's, leakage charged at f*h(qber)"

STATUS_OK = "ok"
STATUS_EMPTY = "empty-sifted-key"
STATUS_THRESHOLD = "qber-above-threshold"
STATUS_NO_BITS = "secure-length-zero"


def estimate_qber(pair: SiftedKeyPair, sample_fraction: float = 1.0, seed: int = 0):
    """Disclose a random subset of the sifted key and return its error rate.

    Returns ``(qber_est, remaining_pair)`` where ``remaining_pair`` holds the
    undisclosed bits in their original order.
    """
    if not 0.0 < sample_fraction <= 1.0:
        raise InvalidParameterError(f"sample_fraction must be in (0, 1], got {sample_fraction}")
    n = len(pair)
    if n == 0:
        raise InvalidParameterError("cannot estimate QBER of an empty key")
    k = n if sample_fraction == 1.0 else max(1, int(round(sample_fraction * n)))
    mask = np.zeros(n, dtype=bool)
    if k == n:
        mask[:] = True
    else:
        mask[rng.generator(seed, rng.TAG_SAMPLE).choice(n, size=k, replace=False)] = True
    qber = float(np.count_nonzero(pair.errors[mask])) / k
    return qber, pair.subset(~mask)


@dataclass
class ReconciliationResult:
    corrected_bits: np.ndarray
    leaked_bits: int
    disclosed_fraction: float
    method: str = RECONCILER


def reconcile(pair: SiftedKeyPair, qber_est: float, f: float) -> ReconciliationResult:
    """Correct Bob's key using the simulation ground truth and charge the leakage.

    The charge is ``ceil(f * h(qber_est) * n)`` bits; no error-correcting
    code is run.
    """
    if not 0.0 <= qber_est < 0.5:
        raise InvalidParameterError(f"qber_est must be in [0, 0.5), got {qber_est}")
    if f < 1.0:
        raise InvalidParameterError(f"reconciliation inefficiency must be >= 1, got {f}")
    frac = f * binary_entropy(qber_est)
    leaked = int(math.ceil(frac * len(pair))) if qber_est > 0 else 0
    return ReconciliationResult(pair.alice_bits.copy(), leaked, frac)


def toeplitz_diagonals(n_in: int, out_len: int, hash_seed: int) -> np.ndarray:
    """The ``n_in + out_len - 1`` random bits defining the hashing matrix.

    Entry ``d`` is the value on the diagonal ``j - k = d - (n_in - 1)``, so
    ``T[j, k] = diag[j - k + n_in - 1]``: the first column is
    ``diag[n_in-1:]`` and the first row is ``diag[n_in-1::-1]``.
    """
    gen = rng.generator(hash_seed, rng.TAG_HASH)
    return gen.integers(0, 2, size=n_in + out_len - 1, dtype=np.uint8)


def toeplitz_hash(key_bits, out_len: int, hash_seed: int) -> np.ndarray:
    """Compress ``key_bits`` to ``out_len`` bits with a seeded Toeplitz matrix over GF(2)."""
    x = np.asarray(key_bits, dtype=np.uint8)
    if out_len < 0 or out_len > x.size:
        raise InvalidParameterError(f"out_len {out_len} must be in [0, {x.size}]")
    if out_len == 0:
        return np.zeros(0, dtype=np.uint8)
    return toeplitz_mult(toeplitz_diagonals(x.size, out_len, hash_seed), x, out_len)


@dataclass
class SecureKeyReport:
    sifted_length: int
    qber_est: float | None
    sample_fraction: float
    remaining_length: int
    leaked_bits: int
    disclosed_fraction: float
    secure_fraction: float
    secure_length: int
    final_key: np.ndarray = field(repr=False)
    hash_seed: int
    status: str
    message: str
    params: SystemParams = field(repr=False)
    reconciler: str = RECONCILER
    generator: str = rng.GENERATOR_NAME

    def secure_rate(self, duration_s: float) -> float:
        return self.secure_length / duration_s

    def summary(self) -> dict:
        return {
            "sifted_length": self.sifted_length,
            "qber_est": self.qber_est,
            "sample_fraction": self.sample_fraction,
            "remaining_length": self.remaining_length,
            "leaked_bits": self.leaked_bits,
            "disclosed_fraction": self.disclosed_fraction,
            "secure_fraction": self.secure_fraction,
            "secure_length": self.secure_length,
            "hash_seed": self.hash_seed,
            "status": self.status,
            "message": self.message,
            "reconciler": self.reconciler,
        }


def secure_length_for(n: int, frac: float) -> int:
    if not frac > 0:
        return 0
    # guard against n * frac landing a hair under an exact integer
    return max(0, int(math.floor(n * frac + 1e-9)))


def distill(pair: SiftedKeyPair, params: SystemParams, sample_fraction: float = 1.0,
            seed: int = 0, hash_seed: int | None = None) -> SecureKeyReport:
    """Run estimation, reconciliation and privacy amplification on a sifted key.

    With ``sample_fraction == 1`` the QBER comes from a full comparison that
    does not consume key bits (the infinite-key idealization); below 1 the
    disclosed sample is discarded before hashing.
    """
    if hash_seed is None:
        hash_seed = rng.stream_key(seed, rng.TAG_HASH)
    n = len(pair)
    threshold = security_threshold(params.mu, params.ec_inefficiency)
    base = dict(sifted_length=n, sample_fraction=sample_fraction, hash_seed=int(hash_seed), params=params)
    if n == 0:
        return SecureKeyReport(qber_est=None, remaining_length=0, leaked_bits=0, disclosed_fraction=0.0,
                               secure_fraction=0.0, secure_length=0, final_key=np.zeros(0, np.uint8),
                               status=STATUS_EMPTY, message="no sifted bits", **base)

    qber, rest = estimate_qber(pair, sample_fraction, seed)
    if sample_fraction == 1.0:
        rest = pair
    m = len(rest)
    if qber >= 0.5:
        frac = -math.inf
        rec = ReconciliationResult(rest.alice_bits.copy(), m, 1.0)
    else:
        frac = secure_fraction(qber, params, strict=False)
        rec = reconcile(rest, qber, params.ec_inefficiency)
    # the f*h cost already sits inside the secure fraction; leaked_bits is audit only
    length = secure_length_for(m, usable_fraction(qber, params))
    if qber >= threshold:
        status = STATUS_THRESHOLD
        message = (f"QBER {100 * qber:.2f} % exceeds the {100 * threshold:.2f} % security threshold; "
                   "no secure key")
    elif length == 0:
        status, message = STATUS_NO_BITS, "key too short for a secure bit"
    else:
        status, message = STATUS_OK, "ok"
    key = toeplitz_hash(rec.corrected_bits, length, hash_seed)
    return SecureKeyReport(qber_est=qber, remaining_length=m, leaked_bits=rec.leaked_bits,
                           disclosed_fraction=rec.disclosed_fraction, secure_fraction=frac,
                           secure_length=length, final_key=key, status=status, message=message, **base)


def key_to_bytes(bits) -> bytes:
    """Pack bits most-significant-first; the last byte is zero-padded."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="big").tobytes()


def key_to_hex(bits) -> str:
    return key_to_bytes(bits).hex()
