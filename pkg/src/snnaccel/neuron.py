"""Leaky integrate-and-fire dynamics and activity traces.

Per timestep a neuron updates its input current toward the incoming
weighted spike sum, integrates the refreshed current into the membrane
potential with a leak toward the resting level, and fires when the
potential crosses threshold (outside the refractory window):

    I <- I + 2**a * (weighted_sum - I)
    V <- V + 2**b * (V_rest - V) + 2**c * I
    spike, V <- (1, V_reset) if V >= V_th and not refractory

All decay exponents are dyadic (shifts).  The membrane integrates the
current refreshed in the same step, matching a pipeline where the
accumulated sum flows straight into the neuron unit.

Traces are 8-bit leaky spike counters used by the consolidation rule; see
`fxp.trace_step` for the leak semantics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fxp import FxpUnit, FloatUnit, TRACE_MAX, validate_dyadic_exp


@dataclass(frozen=True)
class LifParams:
    """Shared neuron constants; exponents are dyadic (2**k factors)."""

    current_exp: int = -3     # a: current convergence rate
    leak_exp: int = -4        # b: membrane leak toward rest
    drive_exp: int = -3       # c: current injection into the membrane
    v_rest: float = 0.0
    v_th: float = 0.25
    v_reset: float = 0.0
    refractory_steps: int = 2

    def __post_init__(self):
        validate_dyadic_exp(self.current_exp, "current_exp")
        validate_dyadic_exp(self.leak_exp, "leak_exp")
        validate_dyadic_exp(self.drive_exp, "drive_exp")
        if not self.v_th > self.v_rest:
            raise ValueError("firing threshold must exceed resting potential")
        if self.refractory_steps < 0:
            raise ValueError("refractory_steps must be >= 0")


@dataclass(frozen=True)
class TraceParams:
    """Trace increment per spike and dyadic leak exponent."""

    increment: int = 25
    leak_exp: int = -2

    def __post_init__(self):
        validate_dyadic_exp(self.leak_exp, "trace leak_exp")
        if not (0 < self.increment <= TRACE_MAX):
            raise ValueError("trace increment must be in 1..255")
        if self.leak_exp >= 0:
            raise ValueError("trace leak exponent must be negative")
        if self.increment << (-self.leak_exp) > TRACE_MAX:
            raise ValueError("trace steady state not representable in 8 bits")


def integrate_current(current, weighted_sum, params: LifParams, unit):
    """Current update of the two-stage integrator (first stage)."""
    return unit.sat(current + unit.dyadic(weighted_sum - current,
                                          params.current_exp))


def integrate_voltage(voltage, current, v_rest_raw, params: LifParams, unit):
    """Membrane update (second stage); single clamp after the add chain."""
    return unit.sat(voltage
                    + unit.dyadic(v_rest_raw - voltage, params.leak_exp)
                    + unit.dyadic(current, params.drive_exp))


def fire(voltage, refrac, v_th_raw, v_reset_raw, refractory_steps: int):
    """Threshold, reset and refractory bookkeeping; returns (spikes, V, refrac).

    A refractory neuron keeps integrating but cannot spike; non-spiking
    neurons count their refractory window down toward zero.
    """
    if isinstance(voltage, np.ndarray):
        spikes = ((voltage >= v_th_raw) & (refrac == 0)).astype(np.int64)
        fired = spikes == 1
        voltage = np.where(fired, v_reset_raw, voltage)
        refrac = np.where(fired, refractory_steps, np.maximum(refrac - 1, 0))
        return spikes, voltage, refrac
    if voltage >= v_th_raw and refrac == 0:
        return 1, v_reset_raw, refractory_steps
    return 0, voltage, max(refrac - 1, 0)


def update_trace(trace, spikes, tp: TraceParams, unit):
    """One step of the leaky spike-count trace."""
    return unit.trace_step(trace, spikes, tp.increment, tp.leak_exp)


class LifLayer:
    """A population of LIF neurons sharing parameters and a datapath unit."""

    def __init__(self, n: int, params: LifParams, unit):
        self.n = n
        self.params = params
        self.unit = unit
        self.v_rest_raw = unit.quantize(params.v_rest)
        self.v_th_raw = unit.quantize(params.v_th)
        self.v_reset_raw = unit.quantize(params.v_reset)
        self.reset()

    def reset(self):
        dtype = np.float64 if self.unit.is_float else np.int64
        self.current = np.zeros(self.n, dtype=dtype)
        self.voltage = np.full(self.n, self.v_rest_raw, dtype=dtype)
        self.refrac = np.zeros(self.n, dtype=np.int64)

    def step(self, weighted_sum) -> np.ndarray:
        """Advance one timestep with the given weighted spike sums."""
        p = self.params
        self.current = integrate_current(self.current, weighted_sum, p, self.unit)
        self.voltage = integrate_voltage(self.voltage, self.current,
                                         self.v_rest_raw, p, self.unit)
        spikes, self.voltage, self.refrac = fire(
            self.voltage, self.refrac, self.v_th_raw, self.v_reset_raw,
            p.refractory_steps)
        return spikes


__all__ = [
    "LifParams", "TraceParams", "LifLayer",
    "integrate_current", "integrate_voltage", "fire", "update_trace",
    "FxpUnit", "FloatUnit",
]
