"""Weights as signed sums of integer powers of two.

A quantized weight is a sign plus up to K exponents, so the weight-input
product needs only shifts and adds. quantize_weight peels powers of two off
the weight magnitude: each term is 2**ceil(log2(m / 1.5)), the residual is
max(m - term, 0), and the recursion stops after K terms or when the residual
drops below the zero epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .fxp import FxValue, WideAcc, fx_shift, widen

DEFAULT_EXP_MIN = -12
DEFAULT_EXP_MAX = 3


@dataclass(frozen=True)
class QuantConfig:
    k: int = 3
    exp_min: int = DEFAULT_EXP_MIN
    exp_max: int = DEFAULT_EXP_MAX

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.exp_min >= self.exp_max:
            raise ValueError("exp_min must be < exp_max")

    @property
    def zero_eps(self) -> float:
        # Below half the smallest shift contribution there is nothing to encode.
        return 2.0 ** (self.exp_min - 1)


@dataclass(frozen=True)
class ShiftWeight:
    sign: int
    exponents: tuple[int, ...] = ()

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign}")
        if self.sign == 0 and self.exponents:
            raise ValueError("zero weight cannot carry exponents")
        if any(a < b for a, b in zip(self.exponents, self.exponents[1:])):
            raise ValueError(f"exponents must be non-increasing, got {self.exponents}")

    def value(self) -> float:
        return self.sign * sum(2.0**n for n in self.exponents)


def sign_of(w: float) -> int:
    if math.isnan(w):
        raise ValueError("sign of NaN is undefined")
    if w > 0:
        return 1
    if w < 0:
        return -1
    return 0


def base_quant(w: float, zero_eps: float = 2.0 ** (DEFAULT_EXP_MIN - 1)) -> float:
    """Nearest power of two under the 1.5 divisor rule; 0 for tiny magnitudes."""
    m = abs(w)
    if m < zero_eps:
        return 0.0
    return 2.0 ** math.ceil(math.log2(m / 1.5))


def quantize_weight(w: float, cfg: QuantConfig = QuantConfig()) -> ShiftWeight:
    """Decompose w into sign and up to cfg.k clamped power-of-two exponents."""
    if not math.isfinite(w):
        raise ValueError(f"weight must be finite, got {w}")
    m = abs(w)
    exponents: list[int] = []
    for _ in range(cfg.k):
        if m < cfg.zero_eps:
            break
        e = math.ceil(math.log2(m / 1.5))
        e = min(max(e, cfg.exp_min), cfg.exp_max)
        exponents.append(e)
        m = max(m - 2.0**e, 0.0)
    if not exponents:
        return ShiftWeight(0)
    return ShiftWeight(sign_of(w), tuple(exponents))


def shift_mul(w: ShiftWeight, x: FxValue, widen_bits: int = -DEFAULT_EXP_MIN) -> WideAcc:
    """Shift-accumulate product in the wide domain.

    The input is pre-widened by widen_bits fractional bits, so right shifts by
    exponents down to -widen_bits discard nothing and the result equals the
    exact integer product of x.raw with the reconstructed weight.
    """
    acc_frac = x.fmt.frac_bits + widen_bits
    if w.sign == 0:
        return WideAcc(0, acc_frac)
    if w.exponents and -w.exponents[-1] > widen_bits:
        raise ValueError(
            f"exponent {w.exponents[-1]} below widening budget -{widen_bits}"
        )
    wide = widen(x, widen_bits)
    total = 0
    for n in w.exponents:
        total += fx_shift(wide, n).raw
    return WideAcc(w.sign * total, acc_frac)
