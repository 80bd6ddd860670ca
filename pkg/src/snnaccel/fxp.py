"""Saturating fixed-point arithmetic for the accelerator datapath.

All on-chip quantities are signed fixed-point integers with a per-class
number of fractional bits F (value = raw / 2**F).  Multiplicative constants
are restricted to powers of two ("dyadic" exponents), so scaling is an
arithmetic shift.  Conventions, applied everywhere:

* saturation, never wraparound; every clamp event is counted
* right shifts and product rescaling round to nearest, ties to even
* exceptions: none -- saturation is silent but observable via the counter

Activity traces are unsigned 8-bit integers with their own leak rule: the
per-step decrement is ``max(1, trace >> |k|)`` so that a silent neuron's
trace always reaches 0 and a maximally active one settles exactly at the
increment times 2**|k|.

Arrays are held as int64 so intermediates never overflow; the format's
bounds are enforced after each operation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DYADIC_EXP = 15

TRACE_MIN = 0
TRACE_MAX = 255


def validate_dyadic_exp(k: int, name: str = "exponent") -> int:
    """Dyadic exponents are signed and bounded; 2**k with |k| <= 15."""
    k = int(k)
    if abs(k) > MAX_DYADIC_EXP:
        raise ValueError(f"{name} out of range: |{k}| > {MAX_DYADIC_EXP}")
    return k


def shift_round_even(x, k: int):
    """Arithmetic right shift by k >= 0 bits, rounding to nearest, ties to even.

    Works on python ints and integer ndarrays; exact for any magnitude.
    Rounds up past the midpoint via the +half carry, then pulls exact ties
    back onto the even quotient.
    """
    if k == 0:
        return x
    half = 1 << (k - 1)
    q = (x + half) >> k
    tie_on_odd = ((x & (2 * half - 1)) == half) & ((q & 1) == 1)
    return q - tie_on_odd


def shift_floor(x, k: int):
    """Plain arithmetic right shift (floor) by k >= 0 bits."""
    return x >> k if k else x


@dataclass(frozen=True)
class FxpFormat:
    """Signed fixed-point format: `bits` total width, `frac` fractional bits."""

    bits: int = 16
    frac: int = 8

    def __post_init__(self):
        if not (self.bits in (16, 32)):
            raise ValueError(f"unsupported width: {self.bits}")
        if not (0 <= self.frac <= self.bits - 1):
            raise ValueError(f"fractional bits out of range: {self.frac}")

    @property
    def raw_min(self) -> int:
        return -(1 << (self.bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.bits - 1)) - 1

    @property
    def one(self) -> int:
        return 1 << self.frac

    @property
    def resolution(self) -> float:
        return 1.0 / self.one


Q7_8 = FxpFormat(bits=16, frac=8)
Q15_16 = FxpFormat(bits=32, frac=16)


class FxpUnit:
    """Fixed-point datapath: quantization, saturating ops, dyadic scaling.

    Methods accept python ints or int64 ndarrays of raw values and return
    the same kind.  `sat_events` counts every element that was clamped.
    """

    is_float = False

    def __init__(self, fmt: FxpFormat = Q7_8):
        self.fmt = fmt
        self.sat_events = 0

    # -- conversions ---------------------------------------------------

    def quantize(self, x):
        """Real value(s) -> raw, round-to-nearest-even, saturated."""
        scaled = np.rint(np.asarray(x, dtype=np.float64) * self.fmt.one)
        raw = scaled.astype(np.int64)
        return self.sat(raw if raw.ndim else int(raw))

    def dequantize(self, raw):
        """Raw value(s) -> real; exact."""
        return np.asarray(raw, dtype=np.float64) / self.fmt.one

    # -- saturation ----------------------------------------------------

    def sat(self, x):
        """Clamp to the format range, counting clamped elements."""
        lo, hi = self.fmt.raw_min, self.fmt.raw_max
        if isinstance(x, np.ndarray):
            if x.size and (x.min() < lo or x.max() > hi):
                clipped = np.clip(x, lo, hi)
                self.sat_events += int(np.count_nonzero(clipped != x))
                return clipped
            return x
        if x < lo:
            self.sat_events += 1
            return lo
        if x > hi:
            self.sat_events += 1
            return hi
        return x

    # -- arithmetic ----------------------------------------------------

    def add(self, a, b):
        return self.sat(a + b)

    def sub(self, a, b):
        return self.sat(a - b)

    def mul(self, a, b):
        """Product rescaled back to F fractional bits, rounded then clamped."""
        wide = np.multiply(a, b, dtype=np.int64) if (
            isinstance(a, np.ndarray) or isinstance(b, np.ndarray)) else a * b
        return self.sat(shift_round_even(wide, self.fmt.frac))

    def dyadic(self, x, k: int):
        """Multiply by 2**k: right shift rounds to nearest even, left saturates."""
        if k < 0:
            return shift_round_even(x, -k)
        if k == 0:
            return x
        if isinstance(x, np.ndarray):
            return self.sat(x << k)
        return self.sat(x << k)

    def neg(self, x):
        return self.sat(-np.asarray(x) if isinstance(x, np.ndarray) else -x)

    # -- accumulation --------------------------------------------------

    def accumulate(self, rows: np.ndarray) -> np.ndarray:
        """Saturating running sum over axis 0 of a (k, n) raw matrix.

        Semantics are a strict sequential chain of saturating adds per
        column (what a clamped accumulator does).  When no partial sum can
        leave the representable range -- the common case, established via
        the per-column L1 bound -- a plain integer sum is identical and is
        used instead.
        """
        if rows.ndim == 1:
            rows = rows[np.newaxis, :]
        if rows.shape[0] == 0:
            return np.zeros(rows.shape[1], dtype=np.int64)
        bound = np.abs(rows).sum(axis=0, dtype=np.int64).max() if rows.size else 0
        if bound <= self.fmt.raw_max:
            return rows.sum(axis=0, dtype=np.int64)
        acc = np.zeros(rows.shape[1], dtype=np.int64)
        for r in rows:
            acc = self.sat(acc + r)
        return acc

    # -- traces ----------------------------------------------------------

    def trace_step(self, trace, spikes, increment: int, leak_exp: int):
        """Leaky spike-count integrator on 8-bit unsigned traces.

        Decrement is max(1, trace >> |leak_exp|) while the trace is nonzero,
        so decay always completes and the spiking steady state sits exactly
        at increment * 2**|leak_exp|.
        """
        leak = shift_floor(trace, -leak_exp)
        leak = np.maximum(leak, (trace > 0).astype(np.int64)) if isinstance(
            trace, np.ndarray) else (max(leak, 1) if trace > 0 else 0)
        nxt = trace - leak + increment * spikes
        if isinstance(nxt, np.ndarray):
            return np.clip(nxt, TRACE_MIN, TRACE_MAX)
        return min(max(nxt, TRACE_MIN), TRACE_MAX)


class FloatUnit:
    """Full-precision reference datapath with the same interface.

    No quantization, no clamping; dyadic factors become exact float
    multiplications.  Traces follow the ideal leaky integrator.
    """

    is_float = True

    def __init__(self, fmt: FxpFormat = Q7_8):
        # fmt retained so format-derived config (thresholds etc.) can be
        # reported consistently; it does not constrain values.
        self.fmt = fmt
        self.sat_events = 0

    def quantize(self, x):
        arr = np.asarray(x, dtype=np.float64)
        return arr if arr.ndim else float(arr)

    def dequantize(self, raw):
        return np.asarray(raw, dtype=np.float64)

    def sat(self, x):
        return x

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def mul(self, a, b):
        return a * b

    def dyadic(self, x, k: int):
        return x * float(2.0 ** k)

    def neg(self, x):
        return -x

    def accumulate(self, rows: np.ndarray) -> np.ndarray:
        if rows.ndim == 1:
            rows = rows[np.newaxis, :]
        if rows.shape[0] == 0:
            return np.zeros(rows.shape[1], dtype=np.float64)
        return rows.sum(axis=0, dtype=np.float64)

    def trace_step(self, trace, spikes, increment: int, leak_exp: int):
        nxt = trace - trace * (2.0 ** leak_exp) + increment * spikes
        if isinstance(nxt, np.ndarray):
            return np.clip(nxt, TRACE_MIN, TRACE_MAX)
        return min(max(nxt, TRACE_MIN), TRACE_MAX)


# -- scalar convenience wrappers ------------------------------------------
# Module-level forms of the core operations, handy in tests and docs.

def quantize(x: float, frac: int, bits: int = 16) -> int:
    return int(FxpUnit(FxpFormat(bits, frac)).quantize(x))


def dequantize(raw: int, frac: int) -> float:
    return raw / float(1 << frac)


def sat_add(a: int, b: int, fmt: FxpFormat = Q7_8) -> int:
    return int(FxpUnit(fmt).add(a, b))


def sat_mul(a: int, b: int, fmt: FxpFormat = Q7_8) -> int:
    return int(FxpUnit(fmt).mul(a, b))


def dyadic_scale(raw: int, k: int, fmt: FxpFormat = Q7_8) -> int:
    validate_dyadic_exp(k)
    return int(FxpUnit(fmt).dyadic(raw, k))
