"""Analytic transistor-count model for the two inference datapaths.

This is a gate-count estimate, not synthesis. Unit costs are documented
defaults (e.g. 6 transistors per full-adder bit) and fully overridable; the
two activation-unit anchors are the only numbers treated as calibration
ground truth.

Per layer with k inputs and j outputs:
  shift scheme     j*k shift units (K shifters + adder + sign selector) plus
                   per-weight storage of sign and K exponent fields,
  multiply scheme  j*k (bits x bits) array multipliers + adders plus 16-bit
                   weight storage,
and in both schemes one bias adder, bias register and activation unit per
neuron. The shift/multiply cost ratio is taken over everything except the
activation units, which are identical in the two schemes and would only
dilute the comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

ACT_PHI_TRANSISTORS = 4098
ACT_TANH_TRANSISTORS = 50418


@dataclass(frozen=True)
class UnitCosts:
    shifter: int = 1  # per selectable bit position per data bit
    adder: int = 6  # per bit
    multiplier: int = 6  # per bit^2
    selector: int = 6  # per instance
    register_bit: int = 6  # per stored bit
    act_phi: int = ACT_PHI_TRANSISTORS
    act_tanh: int = ACT_TANH_TRANSISTORS

    def __post_init__(self):
        if min(self.shifter, self.adder, self.multiplier, self.selector,
               self.register_bit, self.act_phi, self.act_tanh) <= 0:
            raise ValueError("all unit costs must be positive")


@dataclass(frozen=True)
class SqnnScheme:
    k: int = 3
    bits: int = 13
    exp_options: int = 16  # selectable shift positions, e.g. exponents -12..3


@dataclass(frozen=True)
class FqnnScheme:
    bits: int = 16


@dataclass(frozen=True)
class CostReport:
    total: int
    breakdown: dict


def _layer_counts(arch: Sequence[int]):
    for n_in, n_out in zip(arch, arch[1:]):
        yield n_in, n_out


def estimate_cost(
    arch: Sequence[int],
    scheme: SqnnScheme | FqnnScheme,
    costs: UnitCosts = UnitCosts(),
) -> CostReport:
    """Transistor total plus a per-component breakdown for one network."""
    if len(arch) < 2 or any(n < 1 for n in arch):
        raise ValueError("architecture needs >= 2 positive layer widths")
    mac = 0
    weight_store = 0
    bias_adders = 0
    bias_store = 0
    act_units = 0
    n_weights = sum(i * o for i, o in _layer_counts(arch))
    n_neurons = sum(o for _, o in _layer_counts(arch))
    if isinstance(scheme, SqnnScheme):
        su = (
            scheme.k * costs.shifter * scheme.exp_options * scheme.bits
            + costs.adder * scheme.bits
            + costs.selector
        )
        exp_bits = max(1, math.ceil(math.log2(scheme.exp_options)))
        store_bits = 2 + scheme.k * exp_bits  # sign field + K exponent fields
        mac = n_weights * su
        weight_store = n_weights * store_bits * costs.register_bit
        bits = scheme.bits
    else:
        mul = costs.multiplier * scheme.bits * scheme.bits + costs.adder * scheme.bits
        mac = n_weights * mul
        weight_store = n_weights * scheme.bits * costs.register_bit
        bits = scheme.bits
    bias_adders = n_neurons * costs.adder * bits
    bias_store = n_neurons * bits * costs.register_bit
    act_units = n_neurons * costs.act_phi
    breakdown = {
        "mac_units": mac,
        "weight_storage": weight_store,
        "bias_adders": bias_adders,
        "bias_storage": bias_store,
        "activation_units": act_units,
    }
    return CostReport(sum(breakdown.values()), breakdown)


def shift_vs_mult_ratio(
    arch: Sequence[int],
    k: int = 3,
    costs: UnitCosts = UnitCosts(),
    sqnn: SqnnScheme | None = None,
    fqnn: FqnnScheme = FqnnScheme(),
) -> float:
    """Cost ratio of the shift datapath to the multiply datapath.

    Activation units are excluded: both schemes share the same activation
    hardware, so the ratio only reflects the parts that actually differ.
    """
    s = sqnn if sqnn is not None else SqnnScheme(k=k)
    if sqnn is None:
        s = replace(s, k=k)
    rs = estimate_cost(arch, s, costs)
    rm = estimate_cost(arch, fqnn, costs)
    num = rs.total - rs.breakdown["activation_units"]
    den = rm.total - rm.breakdown["activation_units"]
    return num / den


def activation_cost_ratio(costs: UnitCosts = UnitCosts()) -> float:
    """phi vs tanh activation hardware, from the calibration anchors."""
    return costs.act_phi / costs.act_tanh
