"""Analytical latency models for systolic baselines vs the sparse AER path.

The baselines map a T-step spike-train-by-weight product (M=T rows,
K inputs, N outputs) onto a fixed Sr x Sc array in one of three classic
stationarities.  Each fold (tile pass) costs a closed-form number of
cycles derived from skewed-wavefront streaming; folds do not overlap and
always pay the full-array schedule (partial occupancy streams bubbles),
so the baselines cannot exploit spike sparsity.

Per-fold cycle forms:

    output stationary:  K + 2*Sr + Sc - 2       folds = ceil(M/Sr)*ceil(N/Sc)
    weight stationary:  2*Sr + M + Sc - 1       folds = ceil(K/Sr)*ceil(N/Sc)
    input stationary:   2*Sr + N + Sc - 1       folds = ceil(K/Sr)*ceil(M/Sc)

OS streams both operands through resident accumulators and drains results
down the columns (one exit per column per cycle).  WS pins a weight tile
with the reduction running down the rows and streams the M spike vectors;
IS is the mirrored flow that pins the spike tile and streams the N weight
columns.  An empty reduction means the stationary flows have nothing to
pin (zero folds); OS still pays its fill-and-drain schedule.

`simulate_systolic` is the independent oracle: a brute-force cycle-stepped
register-level simulator that moves the operands through the array, checks
the computed product against the dense matmul, and reports the measured
cycle count.  The analytical forms must agree with it exactly.

The AER path costs come from the same counting model the architectural
ledger uses (encoder sweep, bank-parallel fetch per active index, pipeline
fills), so its latency depends on how many inputs are active but never on
which ones.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .arch import aer_forward_cycles, ceil_div

STYLES = ("OS", "WS", "IS")


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = 8
    cols: int = 8

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("array dimensions must be positive")

    @property
    def pes(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class WorkloadShape:
    n_in: int = 256
    n_out: int = 256
    sparsity: float = 0.0         # fraction of inactive inputs
    timesteps: int = 1

    def __post_init__(self):
        if not (0.0 <= self.sparsity <= 1.0):
            raise ValueError(f"sparsity must be in [0, 1], got {self.sparsity}")
        if min(self.n_in, self.n_out, self.timesteps) < 0:
            raise ValueError("workload dimensions must be non-negative")

    @property
    def active_inputs(self) -> int:
        return int(round(self.n_in * (1.0 - self.sparsity)))


# -- analytical baselines ----------------------------------------------------

def latency_baseline(style: str, geom: ArrayGeometry, shape: WorkloadShape) -> int:
    """Dense systolic cycles for the (T x n_in) @ (n_in x n_out) product."""
    m, k, n = shape.timesteps, shape.n_in, shape.n_out
    sr, sc = geom.rows, geom.cols
    if style == "OS":
        folds = ceil_div(m, sr) * ceil_div(n, sc)
        per_fold = k + 2 * sr + sc - 2
    elif style == "WS":
        folds = ceil_div(k, sr) * ceil_div(n, sc)
        per_fold = 2 * sr + m + sc - 1
    elif style == "IS":
        folds = ceil_div(k, sr) * ceil_div(m, sc)
        per_fold = 2 * sr + n + sc - 1
    else:
        raise ValueError(f"unknown dataflow style {style!r}; "
                         f"expected one of {STYLES}")
    return folds * per_fold


def latency_aer(geom: ArrayGeometry, shape: WorkloadShape,
                banks: int = 8) -> int:
    """Event-driven cycles: per timestep, encoder sweep plus bank-parallel
    streaming of the active rows through the mesh tiles."""
    per_step = aer_forward_cycles(shape.n_in, shape.active_inputs,
                                  shape.n_out, geom.rows, geom.cols, banks)
    return shape.timesteps * per_step


# -- brute-force oracle -------------------------------------------------------

def _pad(mat: np.ndarray, rows: int, cols: int) -> np.ndarray:
    out = np.zeros((rows, cols), dtype=np.int64)
    out[:mat.shape[0], :mat.shape[1]] = mat
    return out


def _sim_os_fold(a_tile: np.ndarray, b_tile: np.ndarray, sr: int, sc: int
                 ) -> tuple[int, np.ndarray]:
    """Both operands stream through the array (A right, B down, skewed by
    row/column), products accumulate in place, results drain down the
    columns one exit per column per cycle."""
    k = a_tile.shape[1]
    a = _pad(a_tile, sr, k)
    b = _pad(b_tile.T, sc, k)        # b[c, :] streams down column c
    acc = np.zeros((sr, sc), dtype=np.int64)
    a_pipe = np.zeros((sr, sc), dtype=np.int64)
    b_pipe = np.zeros((sr, sc), dtype=np.int64)
    a_valid = np.zeros((sr, sc), dtype=bool)
    b_valid = np.zeros((sr, sc), dtype=bool)
    macs = np.zeros((sr, sc), dtype=np.int64)
    bottom_done = np.full(sc, -1, dtype=np.int64)
    drained = np.zeros(sc, dtype=np.int64)
    rows_idx = np.arange(sr)
    cols_idx = np.arange(sc)

    cycle = 0
    total_exits = 0
    limit = 10 * (k + sr + sc + 4)
    while total_exits < sr * sc:
        # operand movement: shift right / down, inject skewed at the edges
        a_pipe[:, 1:] = a_pipe[:, :-1]
        a_valid[:, 1:] = a_valid[:, :-1]
        b_pipe[1:, :] = b_pipe[:-1, :]
        b_valid[1:, :] = b_valid[:-1, :]
        ka = cycle - rows_idx
        ok_a = (ka >= 0) & (ka < k)
        a_pipe[:, 0] = np.where(ok_a, a[rows_idx, np.clip(ka, 0, k - 1)], 0)
        a_valid[:, 0] = ok_a
        kb = cycle - cols_idx
        ok_b = (kb >= 0) & (kb < k)
        b_pipe[0, :] = np.where(ok_b, b[cols_idx, np.clip(kb, 0, k - 1)], 0)
        b_valid[0, :] = ok_b
        # multiply-accumulate wherever both operands are live
        live = a_valid & b_valid
        acc += np.where(live, a_pipe * b_pipe, 0)
        macs += live
        # drain bookkeeping: a column starts exiting the cycle after its
        # bottom PE completed all K MACs
        newly = (bottom_done < 0) & (macs[sr - 1, :] == k)
        bottom_done[newly] = cycle
        exits = (bottom_done >= 0) & (bottom_done < cycle) & (drained < sr)
        drained[exits] += 1
        total_exits += int(np.count_nonzero(exits))
        cycle += 1
        if cycle > limit:
            raise RuntimeError("output-stationary fold failed to drain")
    return cycle, acc


def _sim_stream_fold(pinned_tile: np.ndarray, stream: np.ndarray, sr: int,
                     sc: int) -> tuple[int, np.ndarray]:
    """Stationary-tile fold: preload the tile row by row, then stream the
    moving vectors in from the left, skewed by row, while tagged partial
    sums ride down the columns and exit at a registered bottom port.

    pinned_tile has the reduction dimension on its rows (padded to sr x sc);
    stream is (n_vec, sr).  Returns (cycles, outputs (n_vec, sc)).
    """
    n_vec = stream.shape[0]
    pinned = _pad(pinned_tile, sr, sc)
    outputs = np.zeros((n_vec, sc), dtype=np.int64)
    psum = np.zeros((sr + 1, sc), dtype=np.int64)
    tag = np.full((sr + 1, sc), -1, dtype=np.int64)
    moving = np.zeros((sr, sc), dtype=np.int64)
    mtag = np.full((sr, sc), -1, dtype=np.int64)
    rows_idx = np.arange(sr)

    cycles = sr                     # preload, one tile row per cycle
    done = 0
    t = 0
    limit = 10 * (n_vec + sr + sc + 4)
    while done < n_vec * sc:
        # registered exits: sums that reached the bottom last cycle leave now
        exit_tags = tag[sr]
        live = exit_tags >= 0
        if live.any():
            outputs[exit_tags[live], np.flatnonzero(live)] = psum[sr][live]
            done += int(np.count_nonzero(live))
        # streamed operand moves right; inject skewed vectors at the left
        moving[:, 1:] = moving[:, :-1]
        mtag[:, 1:] = mtag[:, :-1]
        v = t - rows_idx
        ok = (v >= 0) & (v < n_vec)
        moving[:, 0] = np.where(ok, stream[np.clip(v, 0, n_vec - 1), rows_idx], 0)
        mtag[:, 0] = np.where(ok, v, -1)
        # partial sums advance one row, absorbing the local product; a sum
        # continues only where the arriving operand carries its own tag
        cond = mtag >= 0
        cond[1:, :] &= tag[1:sr, :] == mtag[1:, :]
        psum_next = np.zeros_like(psum)
        tag_next = np.full_like(tag, -1)
        psum_next[1:, :] = np.where(cond, psum[:sr, :] + moving * pinned, 0)
        tag_next[1:, :] = np.where(cond, mtag, -1)
        psum, tag = psum_next, tag_next
        t += 1
        cycles += 1
        if t > limit:
            raise RuntimeError("stationary fold failed to drain")
    return cycles, outputs


def simulate_systolic(style: str, geom: ArrayGeometry, spikes: np.ndarray,
                      weights: np.ndarray) -> tuple[int, np.ndarray]:
    """Cycle-stepped oracle for one dense matmul on the array.

    spikes is (M, K), weights (K, N); returns total cycles over all folds
    and the computed product, verified against the dense matmul.
    """
    spikes = np.asarray(spikes, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.int64)
    m, k = spikes.shape
    k2, n = weights.shape
    if k != k2:
        raise ValueError("operand shapes disagree on the reduction length")
    sr, sc = geom.rows, geom.cols
    out = np.zeros((m, n), dtype=np.int64)
    total = 0
    if style == "OS":
        for m0 in range(0, m, sr):
            for n0 in range(0, n, sc):
                a_t = spikes[m0:m0 + sr, :]
                b_t = weights[:, n0:n0 + sc]
                cycles, acc = _sim_os_fold(a_t, b_t, sr, sc)
                total += cycles
                out[m0:m0 + sr, n0:n0 + sc] += acc[:a_t.shape[0],
                                                   :b_t.shape[1]]
    elif style == "WS":
        for k0 in range(0, k, sr):
            for n0 in range(0, n, sc):
                b_t = weights[k0:k0 + sr, n0:n0 + sc]
                stream = np.zeros((m, sr), dtype=np.int64)
                stream[:, :b_t.shape[0]] = spikes[:, k0:k0 + sr]
                cycles, outs = _sim_stream_fold(b_t, stream, sr, sc)
                total += cycles
                out[:, n0:n0 + sc] += outs[:, :b_t.shape[1]]
    elif style == "IS":
        # mirrored flow: the spike tile is pinned with the reduction down
        # the rows, weight columns stream through
        at = spikes.T                      # (K, M)
        for k0 in range(0, k, sr):
            for m0 in range(0, m, sc):
                a_t = at[k0:k0 + sr, m0:m0 + sc]
                stream = np.zeros((n, sr), dtype=np.int64)
                stream[:, :a_t.shape[0]] = weights[k0:k0 + sr, :].T
                cycles, outs = _sim_stream_fold(a_t, stream, sr, sc)
                total += cycles
                out[m0:m0 + sc, :] += outs[:, :a_t.shape[1]].T
    else:
        raise ValueError(f"unknown dataflow style {style!r}")

    expect = spikes @ weights
    if not np.array_equal(out, expect):
        raise AssertionError(f"{style} simulator produced a wrong product")
    return total, out


# -- comparison harness ----------------------------------------------------------

def compare(geometries, shapes, banks: int = 8) -> list[dict]:
    """Latency table rows for every (geometry, shape) cell."""
    rows = []
    for geom in geometries:
        for shape in shapes:
            aer = latency_aer(geom, shape, banks)
            for style in STYLES:
                cycles = latency_baseline(style, geom, shape)
                rows.append(dict(style=style, rows=geom.rows, cols=geom.cols,
                                 n_in=shape.n_in, n_out=shape.n_out,
                                 sparsity=shape.sparsity,
                                 timesteps=shape.timesteps, cycles=cycles,
                                 speedup_vs_aer=cycles / aer if aer else
                                 float("nan")))
            rows.append(dict(style="AER", rows=geom.rows, cols=geom.cols,
                             n_in=shape.n_in, n_out=shape.n_out,
                             sparsity=shape.sparsity,
                             timesteps=shape.timesteps, cycles=aer,
                             speedup_vs_aer=1.0))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    cols = ["style", "rows", "cols", "n_in", "n_out", "sparsity",
            "timesteps", "cycles", "speedup_vs_aer"]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for row in rows:
        buf.write(",".join(f"{row[c]:.4f}" if isinstance(row[c], float)
                           else str(row[c]) for c in cols) + "\n")
    return buf.getvalue()
