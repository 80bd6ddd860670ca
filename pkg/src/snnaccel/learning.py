"""Error-driven plasticity with activity-dependent consolidation.

Output spikes are compared against label spikes each step; the positive
and negative parts of the instantaneous error drive two small LIF
populations whose spikes are the "false positive" / "false negative"
error events.  Output-layer dendritic state integrates those events
directly; hidden-layer dendritic state integrates them through a fixed
random feedback matrix that is never trained.

Weight updates fire on presynaptic spikes, scaled by the learning rate,
the postsynaptic dendritic value, a boxcar gate on the postsynaptic
current, and a per-synapse plasticity factor

    f(w, m) = max(0, 1 - |m * w| / 2**d)

where m is the consolidation strength.  m itself moves once per sample:
up when the postsynaptic trace crossed its threshold, down when the
presynaptic trace did, clamped to [0, m_max].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fxp import validate_dyadic_exp, TRACE_MAX
from .neuron import LifLayer, LifParams


@dataclass(frozen=True)
class PlasticityParams:
    """Learning-rule constants (real-valued; quantized where they are used)."""

    learning_rate: float = 2.0 ** -5
    auc_exp: int = 1              # d: plasticity factor hits 0 at |m*w| = 2**d
    i_min: float = -2.0           # boxcar window on postsynaptic current
    i_max: float = 2.0
    theta_pre: int = 50           # trace thresholds, 8-bit domain
    theta_post: int = 50
    meta_step: float = 2.0 ** -4  # per-sample consolidation increment
    meta_max: float = 8.0

    def __post_init__(self):
        validate_dyadic_exp(self.auc_exp, "auc_exp")
        if not self.i_min < self.i_max:
            raise ValueError("boxcar window is empty: i_min must be < i_max")
        for name, theta in (("theta_pre", self.theta_pre),
                            ("theta_post", self.theta_post)):
            if not (0 < theta <= TRACE_MAX):
                raise ValueError(f"{name} must be in 1..{TRACE_MAX}")
        if not self.meta_step > 0:
            raise ValueError("meta_step must be positive")
        if not self.meta_max > 0:
            raise ValueError("meta_max must be positive")


def plasticity_factor(w, m, auc_exp: int, unit):
    """f(w, m) = 1 - |m*w| / 2**d, clamped at zero; 1.0 raw units."""
    prod = unit.mul(m, w)
    mag = np.abs(prod) if isinstance(prod, np.ndarray) else abs(prod)
    f = unit.quantize(1.0) - unit.dyadic(mag, -auc_exp)
    if isinstance(f, np.ndarray):
        return np.maximum(f, 0)
    return max(f, 0)


def boxcar(current, i_min_raw, i_max_raw):
    """Gate that admits plasticity only inside the current window."""
    return (current >= i_min_raw) & (current <= i_max_raw)


def weight_update(w, m, pre_spikes, u_post, i_post, pp: PlasticityParams,
                  unit, eta_raw=None, i_min_raw=None, i_max_raw=None):
    """Apply one step of the gated error-driven update to a synapse matrix.

    w, m are (n_pre, n_post); pre_spikes is (n_pre,); u_post and i_post are
    (n_post,).  The chained products rescale after each multiply, with the
    learning rate folded into the dendritic value first:
    dw = f(w, m) * (eta * U_post), subtracted where the presynaptic neuron
    spiked and the postsynaptic current sits inside the boxcar window.
    """
    if eta_raw is None:
        eta_raw = unit.quantize(pp.learning_rate)
    if i_min_raw is None:
        i_min_raw = unit.quantize(pp.i_min)
    if i_max_raw is None:
        i_max_raw = unit.quantize(pp.i_max)
    f = plasticity_factor(w, m, pp.auc_exp, unit)
    step = unit.mul(f, unit.mul(eta_raw, u_post)[np.newaxis, :])
    gate = boxcar(i_post, i_min_raw, i_max_raw)[np.newaxis, :]
    pre = np.asarray(pre_spikes).astype(bool)[:, np.newaxis]
    if not unit.is_float:
        step = step * (gate & pre)
    else:
        step = step * (gate & pre).astype(np.float64)
    return unit.sub(w, step)


def metaplasticity_update(m, pre_trace, post_trace, pp: PlasticityParams,
                          unit, meta_step_raw=None, meta_max_raw=None):
    """Once-per-sample consolidation move, from end-of-sample traces.

    Strengthen where the postsynaptic trace crossed theta_post, weaken
    where the presynaptic trace crossed theta_pre; simultaneous crossings
    cancel.  Result clamped to [0, meta_max].
    """
    if meta_step_raw is None:
        meta_step_raw = unit.quantize(pp.meta_step)
    if meta_max_raw is None:
        meta_max_raw = unit.quantize(pp.meta_max)
    post_cross = (np.asarray(post_trace) >= pp.theta_post)
    pre_cross = (np.asarray(pre_trace) >= pp.theta_pre)
    direction = post_cross[np.newaxis, :].astype(np.int64) \
        - pre_cross[:, np.newaxis].astype(np.int64)
    if unit.is_float:
        direction = direction.astype(np.float64)
    moved = m + meta_step_raw * direction
    return np.clip(moved, 0, meta_max_raw)


class ErrorPathway:
    """Error spike generation and fixed random feedback to the hidden layer.

    The false-positive and false-negative detectors are one LIF population
    of 2*n_out neurons (positive halves first).  The feedback matrix R
    (n_out x n_hidden) is drawn once from the run seed and frozen;
    learning never touches it.
    """

    def __init__(self, n_out: int, n_hidden: int, unit,
                 error_params: LifParams, rng: np.random.Generator,
                 feedback_scale: float = 0.25):
        self.n_out = n_out
        self.n_hidden = n_hidden
        self.unit = unit
        self.R = unit.quantize(rng.uniform(-feedback_scale, feedback_scale,
                                           size=(n_out, n_hidden)))
        if not unit.is_float:
            self.R = np.asarray(self.R, dtype=np.int64)
        self.detectors = LifLayer(2 * n_out, error_params, unit)
        self.one = unit.quantize(1.0)

    def reset(self):
        self.detectors.reset()

    def compute_error_spikes(self, out_spikes, label_spikes):
        """Drive the error detectors with the +/- parts of (out - label)."""
        out_spikes = np.asarray(out_spikes)
        label_spikes = np.asarray(label_spikes)
        if out_spikes.shape != (self.n_out,) or label_spikes.shape != (self.n_out,):
            raise ValueError(
                f"error comparison needs two length-{self.n_out} spike vectors, "
                f"got {out_spikes.shape} and {label_spikes.shape}")
        err = out_spikes.astype(np.int64) - label_spikes.astype(np.int64)
        drive = np.concatenate([np.maximum(err, 0), np.maximum(-err, 0)])
        spikes = self.detectors.step(drive * self.one)
        return spikes[:self.n_out], spikes[self.n_out:]

    def hidden_drive(self, fp_spikes, fn_spikes):
        """Project signed error events through R: sum of +/- R rows."""
        sign = fp_spikes - fn_spikes
        rows = self.R * sign[:, np.newaxis]
        return self.unit.accumulate(rows)


def update_dendrite(u, drive, u_exp: int, unit):
    """Leak the dendritic state and inject the (already scaled) error drive.

    u <- sat(u - 2**u_exp * u + 2**u_exp * drive)
    """
    return unit.sat(u - unit.dyadic(u, u_exp) + unit.dyadic(drive, u_exp))
