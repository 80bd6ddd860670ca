"""Cycle-approximate structural model of the accelerator.

Structure: an 8x8 mesh of processing elements, an address-event encoder
feeding a FIFO of active-neuron indices, eight SRAM banks with low-order
interleaving, and LIF neuron units on the last mesh row.  A sample runs
in four phases -- initialization (once), forward, backward, synapse
update -- plus one consolidation sweep per training sample.

The ledger charges, per timestep and phase:

* address encoding: one cycle per input bit swept
* synapse streaming: ceil(row_width / banks) bank-parallel cycles per
  active index, per tile of mesh_rows*mesh_cols resident output neurons
* a fixed mesh-depth pipeline fill per tile, and ceil(width / mesh_cols)
  cycles through the LIF units
* neuron-state words (current/potential pairs, one word per neuron)
  read and written back each forward step
* dendritic-state words read and written each backward step; the values
  then stay in PE-local registers, so the update phase re-reads nothing
  but synapses

Synapse words co-locate the weight and its consolidation strength in one
32-bit word, so the update phase costs one read and one write per synapse
touched; the split layout keeps them at separate addresses and pays twice
that.  Functional results are produced by the same datapath kernels as
the reference model and must match it bit for bit -- timing never changes
results.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import RunConfig
from .learning import plasticity_factor, metaplasticity_update, boxcar, \
    update_dendrite
from .model import NetState, label_spike_vector
from .neuron import update_trace


class SimulationError(RuntimeError):
    """Structural limit violated (FIFO overflow, bad address, ...)."""


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


# -- processing elements ----------------------------------------------------

class PeOp(Enum):
    """The eight PE instructions: three compute, five data movement."""

    ACCUM = "accum"
    RESET_ACC = "reset_acc"
    META_UPDATE = "meta_update"
    LOAD_TEMP = "load_temp"
    LOAD_ACC = "load_acc"
    MOVE_INPUT = "move_input"
    MOVE_WEIGHT = "move_weight"
    MOVE_ACCUM = "move_accum"


@dataclass
class PeState:
    """One PE's registers: a saturating accumulator, a temp register, and
    the operand latches of the consolidation-aware update unit."""

    accum: int = 0
    temp: int = 0
    in_reg: int = 0
    w_reg: int = 0
    m_reg: int = 0
    u_reg: int = 0


class ProcessingElement:
    """Instruction-level PE semantics (used at test scale; the phase
    engines run the same arithmetic vectorized)."""

    def __init__(self, unit, pp, eta_raw):
        self.unit = unit
        self.pp = pp
        self.eta_raw = eta_raw
        self.state = PeState()

    def execute(self, op: PeOp, operand: int = 0):
        s, u = self.state, self.unit
        if op is PeOp.ACCUM:
            s.accum = u.add(s.accum, s.w_reg if s.in_reg else 0)
        elif op is PeOp.RESET_ACC:
            s.accum = 0
        elif op is PeOp.META_UPDATE:
            # operand: boxcar gate bit; consumes w/m/u latches
            f = plasticity_factor(s.w_reg, s.m_reg, self.pp.auc_exp, u)
            dw = u.mul(f, u.mul(self.eta_raw, s.u_reg))
            if operand:
                s.w_reg = u.sub(s.w_reg, dw)
        elif op is PeOp.LOAD_TEMP:
            s.temp = operand
        elif op is PeOp.LOAD_ACC:
            s.accum = operand
        elif op is PeOp.MOVE_INPUT:
            prev, s.in_reg = s.in_reg, operand
            return prev
        elif op is PeOp.MOVE_WEIGHT:
            prev, s.w_reg = s.w_reg, operand
            return prev
        elif op is PeOp.MOVE_ACCUM:
            prev, s.accum = s.accum, operand
            return prev
        else:
            raise SimulationError(f"unknown PE opcode: {op}")
        return None


class PeMesh:
    """mesh of PEs with nearest-neighbor links; each PE holds the partial
    sum of exactly one output neuron per tile."""

    def __init__(self, rows: int, cols: int, unit, pp, eta_raw):
        self.rows = rows
        self.cols = cols
        self.grid = [[ProcessingElement(unit, pp, eta_raw)
                      for _ in range(cols)] for _ in range(rows)]

    @property
    def capacity(self) -> int:
        return self.rows * self.cols

    def pe(self, r: int, c: int) -> ProcessingElement:
        return self.grid[r][c]

    def run_accumulation(self, weight_rows: np.ndarray,
                         spikes: np.ndarray) -> np.ndarray:
        """Drive a <=capacity-wide tile through the instruction set:
        reset, then per presynaptic event move the weight and spike in and
        accumulate.  Returns the per-output partial sums."""
        k, width = weight_rows.shape
        if width > self.capacity:
            raise SimulationError(
                f"tile width {width} exceeds mesh capacity {self.capacity}")
        pes = [self.pe(i // self.cols, i % self.cols) for i in range(width)]
        for pe in pes:
            pe.execute(PeOp.RESET_ACC)
        for j in range(k):
            for i, pe in enumerate(pes):
                pe.execute(PeOp.MOVE_WEIGHT, int(weight_rows[j, i]))
                pe.execute(PeOp.MOVE_INPUT, int(spikes[j]))
                pe.execute(PeOp.ACCUM)
        return np.array([pe.state.accum for pe in pes], dtype=np.int64)


# -- address-event FIFO -------------------------------------------------------

class AerFifo:
    """Queue of active-neuron indices produced by the address encoder."""

    def __init__(self, capacity: int = 256):
        self.capacity = capacity
        self.entries = np.empty(0, dtype=np.int64)
        self.peak = 0

    def encode(self, spike_vector: np.ndarray) -> np.ndarray:
        """Priority-encoder sweep: indices of set bits, ascending.

        Cost is one cycle per input bit scanned (charged by the caller).
        Overflow is a configuration problem, not a silent drop.
        """
        idx = np.flatnonzero(spike_vector)
        if idx.size > self.capacity:
            raise SimulationError(
                f"AER FIFO overflow: {idx.size} active indices exceed "
                f"capacity {self.capacity}; raise fifo_capacity")
        self.entries = idx.astype(np.int64)
        self.peak = max(self.peak, int(idx.size))
        return self.entries


# -- banked memory -------------------------------------------------------------

class MemoryBanks:
    """Banked SRAM with low-order interleaving: bank = address % banks.

    Words are 32 bits; a synapse word packs the 16-bit weight with its
    16-bit consolidation strength.  One access per bank per cycle, so a
    burst of unit-stride addresses streams banks-wide without conflict.
    Counters track reads, writes, and serialization beyond the ideal
    bank-parallel schedule.
    """

    def __init__(self, banks: int = 8):
        self.banks = banks
        self.regions: dict[str, tuple[int, int]] = {}
        self._next_base = 0
        self.reads = 0
        self.writes = 0
        self.bank_conflicts = 0

    def alloc(self, name: str, n_words: int) -> int:
        base = self._next_base
        self.regions[name] = (base, n_words)
        self._next_base += n_words
        return base

    def _check(self, name: str, first: int, count: int):
        base, size = self.regions[name]
        if first < 0 or first + count > size:
            raise SimulationError(
                f"address out of range in region {name!r}: "
                f"[{first}, {first + count}) beyond {size} words")

    def schedule(self, addresses: np.ndarray) -> tuple[int, int]:
        """Cycles and conflict count for one burst of parallel accesses.

        The burst drains at one access per bank per cycle; cycles is the
        busiest bank's queue length, conflicts the serialization beyond a
        perfectly balanced schedule.
        """
        addresses = np.asarray(addresses)
        if addresses.size == 0:
            return 0, 0
        per_bank = np.bincount(addresses % self.banks, minlength=self.banks)
        cycles = int(per_bank.max())
        ideal = ceil_div(int(addresses.size), self.banks)
        return cycles, cycles - ideal

    def stream_rows(self, name: str, row_indices: np.ndarray, width: int,
                    write: bool = False) -> int:
        """Unit-stride row transfers: each row of `width` consecutive words
        costs ceil(width / banks) conflict-free cycles (consecutive
        addresses land in distinct banks)."""
        n_rows = int(len(row_indices))
        if n_rows == 0 or width == 0:
            return 0
        lo = int(np.min(row_indices))
        hi = int(np.max(row_indices))
        self._check(name, lo * width, (hi - lo) * width + width)
        words = n_rows * width
        if write:
            self.writes += words
        else:
            self.reads += words
        return n_rows * ceil_div(width, self.banks)

    def stream_block(self, name: str, first: int, count: int,
                     write: bool = False) -> int:
        """One unit-stride block transfer of `count` words."""
        if count == 0:
            return 0
        self._check(name, first, count)
        if write:
            self.writes += count
        else:
            self.reads += count
        return ceil_div(count, self.banks)


# -- cycle ledger ----------------------------------------------------------------

PHASES = ("init", "forward", "backward", "update", "meta")


@dataclass
class PhaseCounters:
    cycles: int = 0
    reads: int = 0
    writes: int = 0
    bank_conflicts: int = 0
    fifo_peak: int = 0
    saturations: int = 0

    def add(self, other: "PhaseCounters"):
        self.cycles += other.cycles
        self.reads += other.reads
        self.writes += other.writes
        self.bank_conflicts += other.bank_conflicts
        self.fifo_peak = max(self.fifo_peak, other.fifo_peak)
        self.saturations += other.saturations


@dataclass
class CycleLedger:
    phases: dict = field(default_factory=lambda: {p: PhaseCounters()
                                                  for p in PHASES})

    def charge(self, phase: str, cycles: int = 0, reads: int = 0,
               writes: int = 0, bank_conflicts: int = 0, fifo_peak: int = 0,
               saturations: int = 0):
        self.phases[phase].add(PhaseCounters(cycles, reads, writes,
                                             bank_conflicts, fifo_peak,
                                             saturations))

    def merge(self, other: "CycleLedger"):
        for p in PHASES:
            self.phases[p].add(other.phases[p])

    def total(self, attr: str) -> int:
        if attr == "fifo_peak":
            return max(getattr(self.phases[p], attr) for p in PHASES)
        return sum(getattr(self.phases[p], attr) for p in PHASES)

    @property
    def total_cycles(self) -> int:
        return self.total("cycles")

    def as_rows(self) -> list[dict]:
        rows = []
        for p in PHASES:
            c = self.phases[p]
            rows.append(dict(phase=p, cycles=c.cycles, reads=c.reads,
                             writes=c.writes, bank_conflicts=c.bank_conflicts,
                             fifo_peak=c.fifo_peak, saturations=c.saturations))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["phase", "cycles", "reads", "writes", "bank_conflicts",
                "fifo_peak", "saturations"]
        buf.write(",".join(cols) + "\n")
        for row in self.as_rows():
            buf.write(",".join(str(row[c]) for c in cols) + "\n")
        return buf.getvalue()


# -- counting helpers (shared with the dataflow comparisons) ----------------------

def tile_widths(n_out: int, capacity: int) -> list[int]:
    """Output neurons resident per mesh pass: full tiles then the remainder."""
    return [min(capacity, n_out - t * capacity)
            for t in range(ceil_div(n_out, capacity))]


def aer_forward_cycles(n_in: int, n_active: int, n_out: int,
                       mesh_rows: int = 8, mesh_cols: int = 8,
                       banks: int = 8) -> int:
    """Forward-phase cycle count for one layer and timestep.

    encoder sweep + per tile (pipeline fill + bank-parallel accumulation
    per active index + LIF pipeline + neuron-state writeback).
    """
    cycles = n_in  # encoder sweep
    for width in tile_widths(n_out, mesh_rows * mesh_cols):
        fetch = ceil_div(width, banks)
        cycles += mesh_rows                    # pipeline fill
        cycles += n_active * fetch             # synapse stream + accumulate
        cycles += ceil_div(width, mesh_cols)   # LIF pipeline
        cycles += 2 * ceil_div(width, banks)   # neuron-state read + write
    return cycles


# -- the accelerator -----------------------------------------------------------

class AcceleratorSim:
    """Timing-annotated engine; functionally identical to FunctionalNet."""

    def __init__(self, cfg: RunConfig, seed: int):
        self.cfg = cfg
        self.s = NetState(cfg, seed)
        self.unit = self.s.unit
        self.ledger = CycleLedger()
        self.colocated = cfg.layout == "colocated"

        self.mesh = PeMesh(cfg.mesh_rows, cfg.mesh_cols, self.unit,
                           self.s.pp, self.s.eta_raw)
        self.fifo_in = AerFifo(cfg.fifo_capacity)
        self.fifo_hidden = AerFifo(cfg.fifo_capacity)
        self.fifo_err = AerFifo(cfg.fifo_capacity)
        self.banks = MemoryBanks(cfg.banks)
        n_syn1 = cfg.n_inputs * cfg.n_hidden
        n_syn2 = cfg.n_hidden * cfg.n_outputs
        if self.colocated:
            self.banks.alloc("syn1", n_syn1)
            self.banks.alloc("syn2", n_syn2)
        else:
            self.banks.alloc("syn1_w", n_syn1)
            self.banks.alloc("syn1_m", n_syn1)
            self.banks.alloc("syn2_w", n_syn2)
            self.banks.alloc("syn2_m", n_syn2)
        self.banks.alloc("feedback", cfg.n_outputs * cfg.n_hidden)
        self.banks.alloc("neuron_state", cfg.n_hidden + cfg.n_outputs)
        self.banks.alloc("dendrite", cfg.n_hidden + cfg.n_outputs)

        # one-time initialization phase: the host loads synapses, feedback
        # weights, and configuration; modeled as word writes into the banks
        cycles = 0
        for region, (_, size) in self.banks.regions.items():
            if region.startswith(("syn", "feedback")):
                cycles += self.banks.stream_block(region, 0, size, write=True)
        self.ledger.charge("init", cycles=cycles, writes=self.banks.writes)

    # -- phase engines -----------------------------------------------------

    def _syn_regions(self, layer: int) -> tuple[str, ...]:
        if self.colocated:
            return (f"syn{layer}",)
        return (f"syn{layer}_w", f"syn{layer}_m")

    def _sat_delta(self, before: int) -> int:
        return self.unit.sat_events - before

    def _traffic_since(self, reads0: int, writes0: int) -> tuple[int, int]:
        return self.banks.reads - reads0, self.banks.writes - writes0

    def _update_moves(self, u_post: np.ndarray) -> bool:
        """Whether any weight can change for these dendritic values.

        On the integer datapath eta*U rounds to zero whenever
        |eta_raw * u| <= 2**(frac-1) (ties land on even zero), and a zero
        inner term zeroes the whole product chain, so skipping the
        arithmetic is exact.  Timing is charged regardless; the hardware
        streams the synapses either way.
        """
        if self.unit.is_float:
            return bool(np.any(u_post))
        bound = int(np.abs(u_post).max()) if u_post.size else 0
        return bound * self.s.eta_raw > (1 << (self.unit.fmt.frac - 1))

    def forward_layer(self, layer: int, in_spikes: np.ndarray) -> np.ndarray:
        """AER fetch + mesh accumulate + LIF pipeline for one layer."""
        cfg, s = self.cfg, self.s
        sat0 = self.unit.sat_events
        reads0, writes0 = self.banks.reads, self.banks.writes
        weights = s.w1 if layer == 1 else s.w2
        pop = s.hidden if layer == 1 else s.output
        fifo = self.fifo_in if layer == 1 else self.fifo_hidden
        n_out = weights.shape[1]
        state_base = 0 if layer == 1 else cfg.n_hidden

        active = fifo.encode(in_spikes)
        ws = self.unit.accumulate(weights[active])
        spikes = pop.step(ws)

        cycles = aer_forward_cycles(in_spikes.size, int(active.size), n_out,
                                    cfg.mesh_rows, cfg.mesh_cols, cfg.banks)
        # memory traffic: synapse rows (weight words) + neuron-state words
        self.banks.stream_rows(self._syn_regions(layer)[0], active, n_out)
        self.banks.stream_block("neuron_state", state_base, n_out)
        self.banks.stream_block("neuron_state", state_base, n_out, write=True)
        reads, writes = self._traffic_since(reads0, writes0)
        self.ledger.charge("forward", cycles=cycles, reads=reads,
                           writes=writes, fifo_peak=int(active.size),
                           saturations=self._sat_delta(sat0))
        return spikes

    def run_forward_phase(self, x: np.ndarray):
        """Both layers plus trace bookkeeping; returns (hidden, output)."""
        s = self.s
        spk_h = self.forward_layer(1, x)
        spk_o = self.forward_layer(2, spk_h)
        sat0 = self.unit.sat_events
        s.trace_all = update_trace(s.trace_all,
                                   np.concatenate([x, spk_h, spk_o]),
                                   s.trace_params, self.unit)
        self.ledger.charge("forward", saturations=self._sat_delta(sat0))
        return spk_h, spk_o

    def run_backward_phase(self, out_spikes: np.ndarray,
                           label_spikes: np.ndarray) -> np.ndarray:
        """Error neurons, address-encoded error events, feedback projection,
        dendritic state update; returns the signed error-event vector."""
        cfg, s = self.cfg, self.s
        sat0 = self.unit.sat_events
        reads0, writes0 = self.banks.reads, self.banks.writes
        fp, fn = s.pathway.compute_error_spikes(out_spikes, label_spikes)
        es = fp - fn

        err_bits = np.concatenate([fp, fn])
        active_err = self.fifo_err.encode(err_bits)
        cycles = err_bits.size                       # error encoder sweep
        cycles += ceil_div(2 * cfg.n_outputs, cfg.mesh_cols)  # error LIF pipe

        nonzero = np.flatnonzero(es)
        if nonzero.size:
            drive_rows = s.pathway.R[nonzero] * es[nonzero][:, np.newaxis]
            drive_h = self.unit.accumulate(drive_rows)
            for width in tile_widths(cfg.n_hidden,
                                     cfg.mesh_rows * cfg.mesh_cols):
                cycles += cfg.mesh_rows
                cycles += nonzero.size * ceil_div(width, cfg.banks)
            self.banks.stream_rows("feedback", nonzero, cfg.n_hidden)
        else:
            drive_h = np.zeros_like(s.u_hidden)

        drive = np.concatenate([drive_h, es * s.one])
        s.u_all = update_dendrite(s.u_all, drive, cfg.dendrite_exp, self.unit)
        # dendritic state leaks every step: read + write back all U words
        n_u = cfg.n_hidden + cfg.n_outputs
        cycles += 2 * ceil_div(n_u, cfg.banks)
        self.banks.stream_block("dendrite", 0, n_u)
        self.banks.stream_block("dendrite", 0, n_u, write=True)
        reads, writes = self._traffic_since(reads0, writes0)
        self.ledger.charge("backward", cycles=cycles, reads=reads,
                           writes=writes, fifo_peak=int(active_err.size),
                           saturations=self._sat_delta(sat0))
        return es

    def _update_layer(self, layer: int, active: np.ndarray,
                      u_post: np.ndarray, i_post: np.ndarray):
        cfg, s = self.cfg, self.s
        weights = s.w1 if layer == 1 else s.w2
        metas = s.m1 if layer == 1 else s.m2
        n_out = weights.shape[1]

        if active.size and self._update_moves(u_post):
            inner = self.unit.mul(s.eta_raw, u_post)  # eta * U, per neuron
            gate = boxcar(i_post, s.i_min_raw, s.i_max_raw)
            if self.unit.is_float:
                inner = inner * gate.astype(np.float64)
            else:
                inner = inner * gate
            w_rows = weights[active]
            if cfg.metaplasticity:
                f = plasticity_factor(w_rows, metas[active], s.pp.auc_exp,
                                      self.unit)
                step = self.unit.mul(f, inner[np.newaxis, :])
            else:
                # consolidation strengths are identically zero, so
                # f == 1.0 and the per-synapse product collapses to the
                # per-neuron step (mul by one is exact)
                step = np.broadcast_to(inner, w_rows.shape)
            weights[active] = self.unit.sub(w_rows, step)

        factor = 1 if self.colocated else 2
        cycles = 0
        for width in tile_widths(n_out, cfg.mesh_rows * cfg.mesh_cols):
            cycles += cfg.mesh_rows  # pipeline fill; U already PE-resident
            cycles += int(active.size) * factor * 2 * ceil_div(width, cfg.banks)
        for region in self._syn_regions(layer):
            self.banks.stream_rows(region, active, n_out)
            self.banks.stream_rows(region, active, n_out, write=True)
        return cycles

    def run_update_phase(self, x_active: np.ndarray, h_active: np.ndarray):
        """Gated weight updates for both layers, driven by this step's
        already-encoded presynaptic FIFOs; U values sit in the PEs."""
        s = self.s
        sat0 = self.unit.sat_events
        reads0, writes0 = self.banks.reads, self.banks.writes
        c1 = self._update_layer(1, x_active, s.u_hidden, s.hidden.current)
        c2 = self._update_layer(2, h_active, s.u_out, s.output.current)
        reads, writes = self._traffic_since(reads0, writes0)
        self.ledger.charge("update", cycles=c1 + c2, reads=reads,
                           writes=writes,
                           saturations=self._sat_delta(sat0))

    def run_meta_phase(self):
        """Per-sample consolidation sweep over every synapse word."""
        cfg, s = self.cfg, self.s
        sat0 = self.unit.sat_events
        reads0, writes0 = self.banks.reads, self.banks.writes
        kw = dict(meta_step_raw=s.meta_step_raw, meta_max_raw=s.meta_max_raw)
        s.m1 = metaplasticity_update(s.m1, s.trace_in, s.trace_hidden,
                                     s.pp, self.unit, **kw)
        s.m2 = metaplasticity_update(s.m2, s.trace_hidden, s.trace_out,
                                     s.pp, self.unit, **kw)
        cycles = 0
        for layer, n_syn in ((1, cfg.n_inputs * cfg.n_hidden),
                             (2, cfg.n_hidden * cfg.n_outputs)):
            region = self._syn_regions(layer)[-1]  # m words in split mode
            cycles += self.banks.stream_block(region, 0, n_syn)
            cycles += self.banks.stream_block(region, 0, n_syn, write=True)
        cycles += 2 * cfg.mesh_rows  # one fill per layer sweep
        reads, writes = self._traffic_since(reads0, writes0)
        self.ledger.charge("meta", cycles=cycles, reads=reads, writes=writes,
                           saturations=self._sat_delta(sat0))

    # -- sample-level API -----------------------------------------------------

    def run_sample(self, spike_train: np.ndarray, label: int | None,
                   train: bool) -> tuple[int, CycleLedger]:
        """Run one sample through the phase pipeline; returns the
        prediction and the ledger delta for just this sample."""
        cfg = self.cfg
        before = CycleLedger()
        before.merge(self.ledger)
        self.s.reset_sample_state()
        counts = np.zeros(cfg.n_outputs, dtype=np.int64)
        for t in range(spike_train.shape[0]):
            x = spike_train[t].astype(np.int64)
            spk_h, spk_o = self.run_forward_phase(x)
            counts += spk_o
            if train:
                lbl = label_spike_vector(label, t, cfg.label_period,
                                         cfg.n_outputs)
                self.run_backward_phase(spk_o, lbl)
                self.run_update_phase(self.fifo_in.entries,
                                      self.fifo_hidden.entries)
        if train and cfg.metaplasticity:
            self.run_meta_phase()
        delta = CycleLedger()
        for p in PHASES:
            a, b = self.ledger.phases[p], before.phases[p]
            delta.phases[p] = PhaseCounters(
                cycles=a.cycles - b.cycles, reads=a.reads - b.reads,
                writes=a.writes - b.writes,
                bank_conflicts=a.bank_conflicts - b.bank_conflicts,
                fifo_peak=a.fifo_peak, saturations=a.saturations - b.saturations)
        return int(np.argmax(counts)), delta

    def snapshot(self) -> dict:
        return self.s.snapshot()
