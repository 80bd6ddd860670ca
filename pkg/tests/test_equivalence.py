"""Bit-level agreement between the timing model and the pure reference.

The architectural simulator reorganizes every phase around address events,
banked fetches, and mesh tiles; none of that may change a single bit of
network state.  These tests drive both engines with identical seeds and
spike trains and compare complete snapshots after every sample.
"""

import numpy as np

from snnaccel.arch import AcceleratorSim
from snnaccel.config import RunConfig
from snnaccel.model import FunctionalNet, batched_inference

STATE_KEYS = ("w1", "m1", "w2", "m2", "R", "trace_in", "trace_hidden",
              "trace_out", "u_hidden", "u_out")


def assert_identical(ref: FunctionalNet, acc: AcceleratorSim, context: str):
    a, b = ref.snapshot(), acc.snapshot()
    for key in STATE_KEYS:
        assert np.array_equal(a[key], b[key]), f"{context}: {key} diverged"


def random_sample(rng, timesteps, density):
    return (rng.random((timesteps, 256)) < density).astype(np.uint8)


class TestTrainingEquivalence:
    def test_hundred_random_training_samples_across_seeds(self):
        """>= 100 (sample, seed) combinations, zero tolerance."""
        cfg = RunConfig(timesteps_train=20)
        for seed in range(5):
            ref = FunctionalNet(cfg, seed)
            acc = AcceleratorSim(cfg, seed)
            assert_identical(ref, acc, f"seed {seed} init")
            rng = np.random.default_rng(1000 + seed)
            for i in range(21):
                spikes = random_sample(rng, 20, float(rng.uniform(0.02, 0.5)))
                label = int(rng.integers(0, 2))
                p_ref = ref.run_sample(spikes, label, train=True)
                p_acc, _delta = acc.run_sample(spikes, label, train=True)
                assert p_ref == p_acc, f"seed {seed} sample {i}: prediction"
                assert_identical(ref, acc, f"seed {seed} sample {i}")

    def test_equivalence_with_consolidation_disabled(self):
        cfg = RunConfig(timesteps_train=15, metaplasticity=False)
        ref, acc = FunctionalNet(cfg, 7), AcceleratorSim(cfg, 7)
        rng = np.random.default_rng(77)
        for i in range(10):
            spikes = random_sample(rng, 15, 0.2)
            label = int(rng.integers(0, 2))
            assert ref.run_sample(spikes, label, True) == \
                acc.run_sample(spikes, label, True)[0]
            assert_identical(ref, acc, f"sample {i}")

    def test_equivalence_in_split_layout(self):
        cfg = RunConfig(timesteps_train=15, layout="split")
        ref, acc = FunctionalNet(cfg, 9), AcceleratorSim(cfg, 9)
        rng = np.random.default_rng(99)
        for i in range(10):
            spikes = random_sample(rng, 15, 0.25)
            ref.run_sample(spikes, i % 2, True)
            acc.run_sample(spikes, i % 2, True)
            assert_identical(ref, acc, f"sample {i}")

    def test_equivalence_under_wide_format(self):
        cfg = RunConfig(timesteps_train=12, precision="fxp32")
        ref, acc = FunctionalNet(cfg, 3), AcceleratorSim(cfg, 3)
        rng = np.random.default_rng(33)
        for i in range(8):
            spikes = random_sample(rng, 12, 0.3)
            ref.run_sample(spikes, i % 2, True)
            acc.run_sample(spikes, i % 2, True)
            assert_identical(ref, acc, f"sample {i}")

    def test_equivalence_under_float_reference(self):
        cfg = RunConfig(timesteps_train=12, precision="float")
        ref, acc = FunctionalNet(cfg, 4), AcceleratorSim(cfg, 4)
        rng = np.random.default_rng(44)
        for i in range(8):
            spikes = random_sample(rng, 12, 0.3)
            ref.run_sample(spikes, i % 2, True)
            acc.run_sample(spikes, i % 2, True)
            assert_identical(ref, acc, f"sample {i}")


class TestInferenceEquivalence:
    def test_inference_matches_and_changes_nothing(self):
        cfg = RunConfig(timesteps_eval=25)
        ref, acc = FunctionalNet(cfg, 11), AcceleratorSim(cfg, 11)
        rng = np.random.default_rng(11)
        for i in range(15):
            spikes = random_sample(rng, 25, 0.15)
            assert ref.run_sample(spikes, None, False) == \
                acc.run_sample(spikes, None, False)[0]
        assert_identical(ref, acc, "after inference")

    def test_batched_inference_equals_sequential_engines(self):
        """The vectorized evaluator agrees bit-for-bit with per-sample runs
        on the integer datapath."""
        cfg = RunConfig(timesteps_eval=20)
        acc = AcceleratorSim(cfg, 13)
        rng = np.random.default_rng(13)
        batch = np.stack([random_sample(rng, 20, 0.2) for _ in range(32)])
        seq_preds = [acc.run_sample(batch[i], None, False)[0]
                     for i in range(32)]
        bat_preds = batched_inference(cfg, acc.unit, np.asarray(acc.s.w1),
                                      np.asarray(acc.s.w2), batch)
        assert np.array_equal(bat_preds, seq_preds)

    def test_saturating_fallback_agrees_with_sequential(self):
        """Once weights are hot enough to defeat the no-overflow bound, the
        batched evaluator must fall back without changing results."""
        cfg = RunConfig(timesteps_eval=6)
        acc = AcceleratorSim(cfg, 17)
        acc.s.w1[:] = 300  # column L1 = 256*300 > 32767 forces the fallback
        acc.s.w2[:] = -500
        rng = np.random.default_rng(17)
        batch = np.stack([random_sample(rng, 6, 0.8) for _ in range(4)])
        seq = [acc.run_sample(batch[i], None, False)[0] for i in range(4)]
        bat = batched_inference(cfg, acc.unit, np.asarray(acc.s.w1),
                                np.asarray(acc.s.w2), batch)
        assert np.array_equal(bat, seq)
