"""Signed two's-complement fixed-point arithmetic for the digital datapath.

Values are plain integers tagged with a Q-format. Overflow saturates (never
wraps), encoding rounds to nearest with ties away from zero, and right shifts
are arithmetic (truncation toward -inf), so every operation is bit-exact and
reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class FxFormat:
    """Q-format descriptor; total_bits includes the sign bit."""

    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if not 2 <= self.total_bits <= 32:
            raise ValueError(f"total_bits must be in [2, 32], got {self.total_bits}")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(
                f"frac_bits must be in [0, {self.total_bits}), got {self.frac_bits}"
            )

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def lsb(self) -> float:
        return 2.0 ** -self.frac_bits


# Datapath format: 1 sign + 2 integer + 10 fractional bits.
Q2_10 = FxFormat(total_bits=13, frac_bits=10)
# 16-bit format used by the multiply-based baseline net (1 sign + 5 int + 10 frac).
Q5_10 = FxFormat(total_bits=16, frac_bits=10)


@dataclass(frozen=True)
class FxValue:
    raw: int
    fmt: FxFormat

    def __post_init__(self):
        if not self.fmt.raw_min <= self.raw <= self.fmt.raw_max:
            raise ValueError(
                f"raw {self.raw} outside {self.fmt.total_bits}-bit range "
                f"[{self.fmt.raw_min}, {self.fmt.raw_max}]"
            )

    def to_float(self) -> float:
        return self.raw * self.fmt.lsb


@dataclass(frozen=True)
class WideAcc:
    """Accumulation register with an explicit binary point.

    Backed by a Python int, so it never overflows; saturation happens only
    when narrowing back to a storage format.
    """

    raw: int
    frac_bits: int

    def to_float(self) -> float:
        return self.raw * 2.0 ** -self.frac_bits


def saturate(raw: int, fmt: FxFormat) -> int:
    if raw > fmt.raw_max:
        return fmt.raw_max
    if raw < fmt.raw_min:
        return fmt.raw_min
    return raw


def encode_fx(x: float, fmt: FxFormat) -> FxValue:
    """Encode a real number: round to nearest, ties away from zero, saturate."""
    if math.isnan(x):
        raise ValueError("cannot encode NaN")
    scaled = x * (1 << fmt.frac_bits)
    if math.isinf(scaled):
        return FxValue(fmt.raw_max if scaled > 0 else fmt.raw_min, fmt)
    raw = math.floor(abs(scaled) + 0.5)
    if scaled < 0:
        raw = -raw
    return FxValue(saturate(raw, fmt), fmt)


def decode_fx(v: FxValue) -> float:
    return v.to_float()


def fx_add(a: FxValue, b: FxValue) -> FxValue:
    if a.fmt != b.fmt:
        raise ValueError(f"format mismatch: {a.fmt} vs {b.fmt}")
    return FxValue(saturate(a.raw + b.raw, a.fmt), a.fmt)


def fx_mul(a: FxValue, b: FxValue) -> FxValue:
    """Widened integer product, arithmetic right shift by frac_bits, saturate."""
    if a.fmt != b.fmt:
        raise ValueError(f"format mismatch: {a.fmt} vs {b.fmt}")
    prod = (a.raw * b.raw) >> a.fmt.frac_bits
    return FxValue(saturate(prod, a.fmt), a.fmt)


def widen(x: FxValue, extra_frac_bits: int) -> WideAcc:
    """Promote to the wide domain with extra fractional headroom."""
    if extra_frac_bits < 0:
        raise ValueError("extra_frac_bits must be >= 0")
    return WideAcc(x.raw << extra_frac_bits, x.fmt.frac_bits + extra_frac_bits)


def fx_shift(x: WideAcc, n: int) -> WideAcc:
    """Shift by n bit positions: n>0 left, n<0 arithmetic right, n=0 identity."""
    if n > 0:
        return WideAcc(x.raw << n, x.frac_bits)
    if n < 0:
        return WideAcc(x.raw >> -n, x.frac_bits)
    return x


def wide_add(a: WideAcc, b: WideAcc) -> WideAcc:
    if a.frac_bits != b.frac_bits:
        raise ValueError("wide accumulators must share a binary point")
    return WideAcc(a.raw + b.raw, a.frac_bits)


def narrow(acc: WideAcc, fmt: FxFormat) -> FxValue:
    """Rescale a wide accumulator to a storage format (truncate, then saturate)."""
    shift = acc.frac_bits - fmt.frac_bits
    if shift >= 0:
        raw = acc.raw >> shift
    else:
        raw = acc.raw << -shift
    return FxValue(saturate(raw, fmt), fmt)
