"""Experiment harness: training runs, ablations, benches, reports.

Subcommands:

    train          sequential-task training, multi-seed, JSON report
    eval           re-evaluate saved weights on the held-out task sets
    bench-dataflow latency comparison table (systolic baselines vs AER)
    bench-memory   co-located vs split synapse layout, same workload
    report-memory  parameter memory footprint, fixed-point vs float32

Reports embed the exact configuration and its hash.  Everything written
to disk is deterministic for a given (config, seed); wall-clock timing is
printed to the console only, so repeated runs produce byte-identical
artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .arch import AcceleratorSim, PHASES
from .config import RunConfig, ConfigError, load_config, parse_config_text
from .data import TaskStream, TASK_PAIRS, encode_poisson, sample_rng
from .dataflow import ArrayGeometry, WorkloadShape, compare, rows_to_csv
from .model import batched_inference, make_unit


# -- memory accounting ---------------------------------------------------------

def parameter_memory(cfg: RunConfig, precision: str | None = None) -> dict:
    """Bytes needed to hold the learned parameters and neuron state."""
    precision = precision or cfg.precision
    synapses = cfg.n_inputs * cfg.n_hidden + cfg.n_hidden * cfg.n_outputs
    if precision in ("fxp16",):
        w_bits, m_bits, state_bits = 16, 16, 16
    elif precision in ("fxp32",):
        w_bits, m_bits, state_bits = 32, 32, 32
    else:  # float32 reference footprint
        w_bits, m_bits, state_bits = 32, 32, 32
    n_state = 2 * (cfg.n_hidden + cfg.n_outputs)      # current + potential
    n_feedback = cfg.n_outputs * cfg.n_hidden
    meta_bytes = synapses * m_bits // 8 if cfg.metaplasticity else 0
    return dict(
        precision=precision,
        synapse_count=synapses,
        weight_bytes=synapses * w_bits // 8,
        meta_bytes=meta_bytes,
        synapse_array_bytes=synapses * (w_bits + (m_bits if
                                                  cfg.metaplasticity else 0)) // 8,
        neuron_state_bytes=n_state * state_bits // 8,
        feedback_bytes=n_feedback * w_bits // 8,
        trace_bytes=cfg.n_inputs + cfg.n_hidden + cfg.n_outputs,  # 8-bit each
        total_bytes=(synapses * (w_bits + (m_bits if cfg.metaplasticity
                                           else 0)) // 8
                     + n_state * state_bits // 8
                     + n_feedback * w_bits // 8
                     + cfg.n_inputs + cfg.n_hidden + cfg.n_outputs),
    )


# -- single training run ----------------------------------------------------------

def evaluate_tasks(cfg: RunConfig, sim_state, stream: TaskStream) -> list[float]:
    """Accuracy on every task's held-out set, batched per task."""
    accs = []
    for task in stream.tasks:
        images, labels = stream.test_set(task.index)
        trains = np.stack([
            encode_poisson(img, cfg.timesteps_eval, cfg.rate_max,
                           sample_rng(stream.seed, 1, task.index, j))
            for j, img in enumerate(images)])
        preds = batched_inference(cfg, sim_state.unit, sim_state.w1,
                                  sim_state.w2, trains)
        accs.append(float(np.mean(preds == labels)))
    return accs


@dataclass
class SeedResult:
    seed: int
    task_accuracies: list[float]
    mean_accuracy: float
    ledger_rows: list[dict]
    parameter_memory_bytes: int
    ledger_csv: str = ""


def train_single(cfg: RunConfig, seed: int) -> tuple[SeedResult, dict]:
    """Train over the five tasks in sequence, then evaluate all of them.

    Returns the per-seed result plus the final weight arrays (for
    persistence).
    """
    stream = TaskStream(cfg.dataset_dir, seed=seed, n_train=cfg.n_train,
                        n_test=cfg.n_test)
    sim = AcceleratorSim(cfg, seed)
    for pos, _task, img, lbl in stream.training_sequence():
        spikes = stream.encode_training_sample(pos, img, cfg.timesteps_train,
                                               cfg.rate_max)
        sim.run_sample(spikes, lbl, train=True)
    accs = evaluate_tasks(cfg, sim.s, stream)
    result = SeedResult(
        seed=seed, task_accuracies=accs,
        mean_accuracy=float(np.mean(accs)),
        ledger_rows=sim.ledger.as_rows(),
        parameter_memory_bytes=parameter_memory(cfg)["total_bytes"],
        ledger_csv=sim.ledger.to_csv())
    weights = dict(w1=np.asarray(sim.s.w1), m1=np.asarray(sim.s.m1),
                   w2=np.asarray(sim.s.w2), m2=np.asarray(sim.s.m2),
                   R=np.asarray(sim.s.pathway.R))
    return result, weights


def _train_worker(payload):
    cfg_text, seed = payload
    cfg = parse_config_text(cfg_text)
    result, weights = train_single(cfg, seed)
    return result, {k: np.asarray(v) for k, v in weights.items()}


def run_training(cfg: RunConfig, jobs: int = 1):
    """All seeds of a run, optionally in parallel worker processes."""
    seeds = [cfg.seed + i for i in range(cfg.seeds)]
    payloads = [(cfg.to_text(), s) for s in seeds]
    if jobs > 1 and len(seeds) > 1:
        with get_context("spawn").Pool(min(jobs, len(seeds))) as pool:
            outcomes = pool.map(_train_worker, payloads)
    else:
        outcomes = [_train_worker(p) for p in payloads]
    return seeds, outcomes


@dataclass
class RunReport:
    config_text: str
    config_hash: str
    seeds: list[int]
    results: list[SeedResult]
    mean_accuracy_mean: float
    mean_accuracy_std: float
    wall_time_s: float | None = field(default=None, compare=False)

    def to_json(self) -> str:
        """Canonical JSON: deterministic for a given (config, seeds);
        wall-clock time is deliberately left out."""
        payload = dict(
            config_hash=self.config_hash,
            config=self.config_text.splitlines(),
            seeds=self.seeds,
            results=[dict(seed=r.seed,
                          task_accuracies=[round(a, 6) for a in
                                           r.task_accuracies],
                          mean_accuracy=round(r.mean_accuracy, 6),
                          ledger=r.ledger_rows,
                          parameter_memory_bytes=r.parameter_memory_bytes)
                     for r in self.results],
            mean_accuracy_mean=round(self.mean_accuracy_mean, 6),
            mean_accuracy_std=round(self.mean_accuracy_std, 6),
            task_pairs=[list(p) for p in TASK_PAIRS],
        )
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def build_report(cfg: RunConfig, seeds, results, wall_time=None) -> RunReport:
    means = [r.mean_accuracy for r in results]
    return RunReport(config_text=cfg.to_text(), config_hash=cfg.config_hash(),
                     seeds=list(seeds), results=list(results),
                     mean_accuracy_mean=float(np.mean(means)),
                     mean_accuracy_std=float(np.std(means)),
                     wall_time_s=wall_time)


# -- subcommand implementations -----------------------------------------------------

def _load_cfg(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "seeds", None) is not None:
        overrides["seeds"] = args.seeds
    if getattr(args, "precision", None):
        overrides["precision"] = args.precision
    if getattr(args, "no_metaplasticity", False):
        overrides["metaplasticity"] = False
    if getattr(args, "layout", None):
        overrides["layout"] = args.layout
    if getattr(args, "dataset", None):
        overrides["dataset_dir"] = args.dataset
    cfg = cfg.replace(**overrides)
    problems = cfg.validate()
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        raise ConfigError(f"{len(problems)} configuration problem(s)")
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out or "runs")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    t0 = time.time()
    seeds, outcomes = run_training(cfg, jobs=args.jobs)
    wall = time.time() - t0
    results = [r for r, _w in outcomes]
    report = build_report(cfg, seeds, results, wall_time=wall)
    tag = f"{cfg.precision}_{'meta' if cfg.metaplasticity else 'nometa'}"
    report_path = out / f"report_{tag}_{cfg.config_hash()}.json"
    report_path.write_text(report.to_json())
    for seed, (result, weights) in zip(seeds, outcomes):
        np.savez(out / f"weights_{tag}_seed{seed}.npz",
                 config_hash=cfg.config_hash(), **weights)
        (out / f"ledger_{tag}_seed{seed}.csv").write_text(result.ledger_csv)
    print(f"report: {report_path}")
    for r in results:
        accs = " ".join(f"{a:.3f}" for a in r.task_accuracies)
        print(f"seed {r.seed}: tasks [{accs}] mean {r.mean_accuracy:.4f}")
    print(f"mean accuracy {report.mean_accuracy_mean:.4f} "
          f"+/- {report.mean_accuracy_std:.4f}  ({wall:.1f}s)")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    bundle = np.load(args.weights)
    stored_hash = str(bundle["config_hash"])
    if stored_hash != cfg.config_hash():
        print(f"note: weights were trained under config {stored_hash}, "
              f"evaluating under {cfg.config_hash()}", file=sys.stderr)
    stream = TaskStream(cfg.dataset_dir, seed=cfg.seed, n_train=cfg.n_train,
                        n_test=cfg.n_test)
    unit = make_unit(cfg.precision)

    class _State:
        pass

    state = _State()
    state.unit = unit
    state.w1 = bundle["w1"]
    state.w2 = bundle["w2"]
    accs = evaluate_tasks(cfg, state, stream)
    for i, acc in enumerate(accs):
        print(f"task {i} {TASK_PAIRS[i]}: {acc:.4f}")
    print(f"mean accuracy {np.mean(accs):.4f}")
    return 0


def cmd_bench_dataflow(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    geometries = [ArrayGeometry(4, 16), ArrayGeometry(8, 8),
                  ArrayGeometry(16, 4)]
    shapes = [WorkloadShape(256, 256, s, t)
              for t in (1, 10) for s in (0.0, 0.25, 0.5, 0.75)]
    rows = compare(geometries, shapes, banks=cfg.banks)
    csv_text = rows_to_csv(rows)
    path = out / "bench_dataflow.csv"
    path.write_text(csv_text)
    print(csv_text, end="")
    print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_bench_memory(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    lines = ["layout,phase,cycles,reads,writes,bank_conflicts"]
    totals = {}
    for layout in ("colocated", "split"):
        lcfg = cfg.replace(layout=layout)
        result, _w = train_single(lcfg, lcfg.seed)
        per_phase = {row["phase"]: row for row in result.ledger_rows}
        for phase in PHASES:
            row = per_phase[phase]
            lines.append(f"{layout},{phase},{row['cycles']},{row['reads']},"
                         f"{row['writes']},{row['bank_conflicts']}")
        totals[layout] = dict(
            cycles=sum(r["cycles"] for r in result.ledger_rows),
            update_reads=per_phase["update"]["reads"],
            mean_accuracy=result.mean_accuracy)
    reduction = 1.0 - totals["colocated"]["cycles"] / totals["split"]["cycles"]
    read_ratio = (totals["split"]["update_reads"]
                  / max(totals["colocated"]["update_reads"], 1))
    lines.append(f"# update-phase read ratio split/colocated: {read_ratio:.4f}")
    lines.append(f"# training cycle reduction from co-location: "
                 f"{reduction * 100:.2f}%")
    csv_text = "\n".join(lines) + "\n"
    path = out / "bench_memory.csv"
    path.write_text(csv_text)
    print(csv_text, end="")
    print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_report_memory(args) -> int:
    cfg = _load_cfg(args)
    fxp = parameter_memory(cfg, "fxp16")
    flt = parameter_memory(cfg, "float")
    print(f"synapse count: {fxp['synapse_count']}")
    print(f"fxp16  synapse array: {fxp['synapse_array_bytes']} bytes "
          f"(+{fxp['neuron_state_bytes']} state, {fxp['feedback_bytes']} "
          f"feedback, {fxp['trace_bytes']} traces)")
    print(f"float32 synapse array: {flt['synapse_array_bytes']} bytes")
    ratio = flt["synapse_array_bytes"] / fxp["synapse_array_bytes"]
    print(f"float32/fxp16 synapse array ratio: {ratio:.2f}x")
    print(f"fxp16  total: {fxp['total_bytes']} bytes")
    print(f"float32 total: {flt['total_bytes']} bytes")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="snnaccel",
        description="Spiking continual-learning accelerator simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_seeds=True):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--seed", type=int, help="base seed override")
        if with_seeds:
            p.add_argument("--seeds", type=int,
                           help="number of seeds (default from config)")
        p.add_argument("--out", help="output directory (default: runs/)")
        p.add_argument("--precision", choices=("fxp16", "fxp32", "float"))
        p.add_argument("--no-metaplasticity", action="store_true",
                       help="disable consolidation (ablation baseline)")
        p.add_argument("--layout", choices=("colocated", "split"))
        p.add_argument("--dataset", help="dataset directory override")

    p_train = sub.add_parser("train", help="run the sequential-task benchmark")
    common(p_train)
    p_train.add_argument("--jobs", type=int, default=1,
                         help="parallel worker processes for seeds")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate saved weights")
    common(p_eval)
    p_eval.add_argument("--weights", required=True, help="weights .npz file")
    p_eval.set_defaults(func=cmd_eval)

    p_bd = sub.add_parser("bench-dataflow", help="latency comparison table")
    common(p_bd, with_seeds=False)
    p_bd.set_defaults(func=cmd_bench_dataflow)

    p_bm = sub.add_parser("bench-memory",
                          help="co-located vs split layout bench")
    common(p_bm, with_seeds=False)
    p_bm.set_defaults(func=cmd_bench_memory)

    p_rm = sub.add_parser("report-memory", help="parameter memory footprint")
    common(p_rm, with_seeds=False)
    p_rm.set_defaults(func=cmd_report_memory)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
