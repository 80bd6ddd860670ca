"""Pure functional reference of the two-layer spiking learner.

This is the behavioral ground truth the timing model must reproduce
bit-for-bit: dense layer math, no memory system, no cycle accounting.
One training step runs forward (currents, potentials, spikes, traces),
backward (error neurons, dendritic states), and the gated weight update;
after the last step of a sample the consolidation variables move once.

`NetState` holds everything a network engine needs -- parameter arrays,
per-sample dynamic state, quantized constants -- and is built identically
for the reference and for the architectural simulator so their parameter
streams match exactly.
"""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .fxp import FxpUnit, FloatUnit, Q7_8, Q15_16
from .neuron import LifParams, TraceParams, LifLayer, update_trace
from .learning import (PlasticityParams, ErrorPathway, weight_update,
                       metaplasticity_update, update_dendrite)


def make_unit(precision: str):
    if precision == "fxp16":
        return FxpUnit(Q7_8)
    if precision == "fxp32":
        return FxpUnit(Q15_16)
    if precision == "float":
        return FloatUnit(Q7_8)
    raise ValueError(f"unknown precision mode: {precision!r}")


def lif_params_from(cfg: RunConfig, v_th: float | None = None) -> LifParams:
    return LifParams(current_exp=cfg.current_exp, leak_exp=cfg.leak_exp,
                     drive_exp=cfg.drive_exp, v_rest=cfg.v_rest,
                     v_th=cfg.v_th if v_th is None else v_th,
                     v_reset=cfg.v_reset,
                     refractory_steps=cfg.refractory_steps)


def plasticity_params_from(cfg: RunConfig) -> PlasticityParams:
    return PlasticityParams(learning_rate=cfg.learning_rate,
                            auc_exp=cfg.auc_exp,
                            i_min=cfg.i_min, i_max=cfg.i_max,
                            theta_pre=cfg.theta_pre, theta_post=cfg.theta_post,
                            meta_step=cfg.meta_step, meta_max=cfg.meta_max)


def init_synapses(cfg: RunConfig, seed: int, unit):
    """Draw the initial parameter arrays from the run seed.

    Draw order is fixed (hidden weights, output weights, feedback matrix)
    so every engine sees the same stream.  Consolidation strengths start
    at zero.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    w1 = unit.quantize(rng.uniform(-cfg.weight_init, cfg.weight_init,
                                   size=(cfg.n_inputs, cfg.n_hidden)))
    w2 = unit.quantize(rng.uniform(-cfg.weight_init, cfg.weight_init,
                                   size=(cfg.n_hidden, cfg.n_outputs)))
    dtype = np.float64 if unit.is_float else np.int64
    w1 = np.asarray(w1, dtype=dtype)
    w2 = np.asarray(w2, dtype=dtype)
    m1 = np.zeros_like(w1)
    m2 = np.zeros_like(w2)
    return w1, m1, w2, m2, rng


def label_spike_vector(label: int, t: int, period: int, n_out: int) -> np.ndarray:
    """Supervision stream: the correct neuron spikes every `period` steps."""
    vec = np.zeros(n_out, dtype=np.int64)
    if t % period == 0:
        vec[label] = 1
    return vec


class NetState:
    """Parameters, populations, constants, and per-sample dynamic state."""

    def __init__(self, cfg: RunConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.unit = make_unit(cfg.precision)
        u = self.unit

        self.w1, self.m1, self.w2, self.m2, rng = init_synapses(cfg, seed, u)
        self.lif_params = lif_params_from(cfg)
        self.trace_params = TraceParams(increment=cfg.trace_increment,
                                        leak_exp=cfg.trace_leak_exp)
        self.pp = plasticity_params_from(cfg)
        self.hidden = LifLayer(cfg.n_hidden, self.lif_params, u)
        self.output = LifLayer(cfg.n_outputs, self.lif_params, u)
        self.pathway = ErrorPathway(
            cfg.n_outputs, cfg.n_hidden, u,
            lif_params_from(cfg, v_th=cfg.error_v_th), rng,
            feedback_scale=cfg.feedback_scale)

        self.eta_raw = u.quantize(cfg.learning_rate)
        self.i_min_raw = u.quantize(cfg.i_min)
        self.i_max_raw = u.quantize(cfg.i_max)
        self.meta_step_raw = u.quantize(cfg.meta_step)
        self.meta_max_raw = u.quantize(cfg.meta_max)
        self.one = u.quantize(1.0)
        self.reset_sample_state()

    def reset_sample_state(self):
        """Zero the per-sample dynamics.  Traces live in one array
        (input | hidden | output) and dendritic values in another
        (hidden | output) so a timestep updates each with a single kernel
        call; the named views below slice them."""
        cfg, u = self.cfg, self.unit
        dtype = np.float64 if u.is_float else np.int64
        self.hidden.reset()
        self.output.reset()
        self.pathway.reset()
        self.trace_all = np.zeros(cfg.n_inputs + cfg.n_hidden + cfg.n_outputs,
                                  dtype=dtype)
        self.u_all = np.zeros(cfg.n_hidden + cfg.n_outputs, dtype=dtype)

    @property
    def trace_in(self):
        return self.trace_all[:self.cfg.n_inputs]

    @property
    def trace_hidden(self):
        n = self.cfg.n_inputs
        return self.trace_all[n:n + self.cfg.n_hidden]

    @property
    def trace_out(self):
        return self.trace_all[self.cfg.n_inputs + self.cfg.n_hidden:]

    @property
    def u_hidden(self):
        return self.u_all[:self.cfg.n_hidden]

    @property
    def u_out(self):
        return self.u_all[self.cfg.n_hidden:]

    def snapshot(self) -> dict:
        """Copies of all learned and dynamic state, for equivalence checks."""
        return {
            "w1": np.array(self.w1), "m1": np.array(self.m1),
            "w2": np.array(self.w2), "m2": np.array(self.m2),
            "R": np.array(self.pathway.R),
            "trace_in": np.array(self.trace_in),
            "trace_hidden": np.array(self.trace_hidden),
            "trace_out": np.array(self.trace_out),
            "u_hidden": np.array(self.u_hidden),
            "u_out": np.array(self.u_out),
        }


class FunctionalNet:
    """Reference engine over a NetState, all layer math done densely."""

    def __init__(self, cfg: RunConfig, seed: int):
        self.cfg = cfg
        self.s = NetState(cfg, seed)
        self.unit = self.s.unit

    # -- phases ----------------------------------------------------------

    def _weighted_sum_dense(self, weights, spikes):
        rows = weights * spikes[:, np.newaxis]
        return self.unit.accumulate(rows)

    def forward_step(self, x: np.ndarray):
        """One forward timestep; returns (hidden spikes, output spikes)."""
        s = self.s
        spk_h = s.hidden.step(self._weighted_sum_dense(s.w1, x))
        spk_o = s.output.step(self._weighted_sum_dense(s.w2, spk_h))
        s.trace_all = update_trace(s.trace_all,
                                   np.concatenate([x, spk_h, spk_o]),
                                   s.trace_params, self.unit)
        return spk_h, spk_o

    def backward_step(self, out_spikes, label_spikes):
        """Error neurons fire, dendritic states leak and integrate."""
        s = self.s
        fp, fn = s.pathway.compute_error_spikes(out_spikes, label_spikes)
        drive_h = s.pathway.hidden_drive(fp, fn)
        drive = np.concatenate([drive_h, (fp - fn) * s.one])
        s.u_all = update_dendrite(s.u_all, drive, self.cfg.dendrite_exp,
                                  self.unit)

    def update_step(self, x, spk_h):
        """Gated weight updates for both layers."""
        s = self.s
        kw = dict(eta_raw=s.eta_raw, i_min_raw=s.i_min_raw,
                  i_max_raw=s.i_max_raw)
        s.w1 = weight_update(s.w1, s.m1, x, s.u_hidden,
                             s.hidden.current, s.pp, self.unit, **kw)
        s.w2 = weight_update(s.w2, s.m2, spk_h, s.u_out,
                             s.output.current, s.pp, self.unit, **kw)

    def consolidate(self):
        """Per-sample consolidation from end-of-sample traces."""
        s = self.s
        kw = dict(meta_step_raw=s.meta_step_raw, meta_max_raw=s.meta_max_raw)
        s.m1 = metaplasticity_update(s.m1, s.trace_in, s.trace_hidden,
                                     s.pp, self.unit, **kw)
        s.m2 = metaplasticity_update(s.m2, s.trace_hidden, s.trace_out,
                                     s.pp, self.unit, **kw)

    # -- sample-level API --------------------------------------------------

    def run_sample(self, spike_train: np.ndarray, label: int | None,
                   train: bool) -> int:
        """Run T timesteps; training also runs backward/update each step and
        one consolidation pass at the end.  Returns the prediction."""
        cfg = self.cfg
        self.s.reset_sample_state()
        counts = np.zeros(cfg.n_outputs, dtype=np.int64)
        for t in range(spike_train.shape[0]):
            x = spike_train[t].astype(np.int64)
            spk_h, spk_o = self.forward_step(x)
            counts += spk_o
            if train:
                lbl = label_spike_vector(label, t, cfg.label_period,
                                         cfg.n_outputs)
                self.backward_step(spk_o, lbl)
                self.update_step(x, spk_h)
        if train and cfg.metaplasticity:
            self.consolidate()
        return int(np.argmax(counts))

    def snapshot(self) -> dict:
        return self.s.snapshot()


def batched_inference(cfg: RunConfig, unit, w1, w2, spike_trains: np.ndarray
                      ) -> np.ndarray:
    """Vectorized inference over a batch of samples; (B, T, n_in) -> (B,).

    For the integer datapaths the results are bit-identical to running
    samples one at a time: rows are independent and the plain matrix
    products are exact whenever no running sum can leave the representable
    range (checked via per-column L1 bounds; falls back to the sequential
    engine otherwise).  The float datapath uses BLAS matrix products, which
    are deterministic per platform but may round differently from the
    sequential reference in the last bit.
    """
    B, T, _ = spike_trains.shape
    if not unit.is_float:
        l1_hidden = np.abs(w1).sum(axis=0, dtype=np.int64).max() if w1.size else 0
        l1_out = np.abs(w2).sum(axis=0, dtype=np.int64).max() if w2.size else 0
        if max(l1_hidden, l1_out) > unit.fmt.raw_max:
            return _inference_sequential(cfg, unit, w1, w2, spike_trains)

    p = lif_params_from(cfg)
    dtype = np.float64 if unit.is_float else np.int64
    v_rest = unit.quantize(p.v_rest)
    v_th = unit.quantize(p.v_th)
    v_reset = unit.quantize(p.v_reset)

    def fresh(n):
        return (np.zeros((B, n), dtype=dtype),
                np.full((B, n), v_rest, dtype=dtype),
                np.zeros((B, n), dtype=np.int64))

    i_h, v_h, r_h = fresh(cfg.n_hidden)
    i_o, v_o, r_o = fresh(cfg.n_outputs)
    counts = np.zeros((B, cfg.n_outputs), dtype=np.int64)

    for t in range(T):
        x = spike_trains[:, t, :].astype(dtype)
        ws_h = x @ w1
        i_h, v_h, r_h, spk_h = _lif_step_batch(i_h, v_h, r_h, ws_h, p, unit,
                                               v_rest, v_th, v_reset)
        ws_o = spk_h.astype(dtype) @ w2
        i_o, v_o, r_o, spk_o = _lif_step_batch(i_o, v_o, r_o, ws_o, p, unit,
                                               v_rest, v_th, v_reset)
        counts += spk_o
    return np.argmax(counts, axis=1)


def _lif_step_batch(current, voltage, refrac, ws, p, unit, v_rest, v_th, v_reset):
    current = unit.sat(current + unit.dyadic(ws - current, p.current_exp))
    voltage = unit.sat(voltage + unit.dyadic(v_rest - voltage, p.leak_exp)
                       + unit.dyadic(current, p.drive_exp))
    spikes = ((voltage >= v_th) & (refrac == 0)).astype(np.int64)
    fired = spikes == 1
    voltage = np.where(fired, v_reset, voltage)
    refrac = np.where(fired, p.refractory_steps, np.maximum(refrac - 1, 0))
    return current, voltage, refrac, spikes


def _inference_sequential(cfg, unit, w1, w2, spike_trains):
    preds = np.empty(spike_trains.shape[0], dtype=np.int64)
    p = lif_params_from(cfg)
    hidden = LifLayer(cfg.n_hidden, p, unit)
    output = LifLayer(cfg.n_outputs, p, unit)
    for b in range(spike_trains.shape[0]):
        hidden.reset()
        output.reset()
        counts = np.zeros(cfg.n_outputs, dtype=np.int64)
        for t in range(spike_trains.shape[1]):
            x = spike_trains[b, t].astype(np.int64)
            spk_h = hidden.step(unit.accumulate(w1 * x[:, np.newaxis]))
            spk_o = output.step(unit.accumulate(w2 * spk_h[:, np.newaxis]))
            counts += spk_o
        preds[b] = int(np.argmax(counts))
    return preds
