"""
Tests for noise sampling and FR / PSFR estimation.
"""

import io
import json
import math

import numpy as np
import pytest

from benchgen import adder_like
from circuit import Circuit, FlagType, Gate, GateRole, InitBasis
from conftest import example_fault
from errors import BodyMismatchError
from flagger import FlagBudget, compile_flagged
from frames import TWO_QUBIT_PAULIS
from montecarlo import (
    CSV_COLUMNS,
    NoiseModel,
    RunReport,
    ShotTally,
    SimConfig,
    chunk_rng,
    draw_faults,
    estimate,
    first_order_failure_rate,
    fr_delta,
    frame_seed,
    inject_error_experiment,
    sample_frames,
    sample_inputs,
    sample_shot,
    write_csv,
)


def within_sigma(value, expected, n, k=3.0):
    p = expected / n if n else 0.0
    return abs(value - expected) <= k * math.sqrt(n * p * (1 - p))


def noisy_cnot_count(c: Circuit, noise: NoiseModel) -> int:
    return sum(1 for g in c.gates if noise.gate_probability(g) > 0)


class TestNoiseModel:

    def test_gate_probabilities(self):
        noise = NoiseModel(0.01, 0.5)
        assert noise.p_flag == pytest.approx(0.005)
        assert noise.gate_probability(Gate.cnot(0, 1)) == 0.01
        assert noise.gate_probability(Gate.cnot(0, 1, GateRole.FLAG_GADGET)) == pytest.approx(0.005)
        assert noise.gate_probability(Gate.h(0)) == 0.0

    @pytest.mark.parametrize('p, m', [(-0.1, 1.0), (1.5, 1.0), (0.1, -0.5), (0.1, 2.0)])
    def test_ranges(self, p, m):
        with pytest.raises(ValueError):
            NoiseModel(p, m)

    @pytest.mark.parametrize('kwargs', [
        {'shots_per_input': 0}, {'max_inputs': 0}, {'stabilizer_subsample_r': 0}, {'workers': 0},
    ])
    def test_sim_config_ranges(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)


class TestSampling:

    def test_exhaustive_inputs(self, example_body):
        inputs = sample_inputs(example_body, SimConfig(max_inputs=8))
        assert sorted(inputs) == sorted({'000', '+00', '++0', '+0+', '0+0', '0++', '00+', '+++'})

    def test_random_inputs_are_distinct_and_seeded(self):
        c = adder_like(4)
        a = sample_inputs(c, SimConfig(max_inputs=50, seed=3))
        b = sample_inputs(c, SimConfig(max_inputs=50, seed=3))
        assert a == b
        assert len(set(a)) == 50
        assert all(len(s) == 9 and set(s) <= {'0', '+'} for s in a)
        assert sample_inputs(c, SimConfig(max_inputs=50, seed=4)) != a

    def test_uniform_two_qubit_paulis(self):
        c = Circuit(2, (InitBasis.ZERO,) * 2, (Gate.cnot(0, 1),))
        shots = 15_000
        fx, fz = sample_frames(c, NoiseModel(1.0), shots, frame_seed(11, 0, 0))
        index = 8 * fx[0] + 4 * fz[0] + 2 * fx[1] + fz[1]
        counts = np.bincount(index.astype(np.int64), minlength=16)
        assert counts[0] == 0
        assert counts.sum() == shots
        for k in range(1, 16):
            assert within_sigma(counts[k], shots / 15, shots), (k, counts[k])

    def test_sample_frames_chunk_seeds(self):
        c = adder_like(2)
        noise = NoiseModel(0.05)
        a = sample_frames(c, noise, 500, frame_seed(3, 1, 2))
        b = sample_frames(c, noise, 500, frame_seed(3, 1, 2))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert a[0].shape == (c.n_qubits, 500)
        assert frame_seed(3, 1, 2) != frame_seed(3, 1, 3)

    def test_draw_faults_uniform_paulis(self):
        c = Circuit(2, (InitBasis.ZERO,) * 2, (Gate.cnot(0, 1),))
        rng = chunk_rng(12, 0, 0)
        shots = 15_000
        counts = {label: 0 for label in TWO_QUBIT_PAULIS}
        for _ in range(shots):
            (fault,) = draw_faults(c, NoiseModel(1.0), rng)
            counts[fault.pauli] += 1
        assert sum(counts.values()) == shots
        for label, count in counts.items():
            assert within_sigma(count, shots / 15, shots), (label, count)

    def test_draw_faults(self, example_flagged):
        rng = chunk_rng(0, 0, 0)
        assert draw_faults(example_flagged, NoiseModel(0.0), rng) == []
        faults = draw_faults(example_flagged, NoiseModel(1.0, 1.0), rng)
        assert [f.location for f in faults] == [0, 1, 2, 3]
        assert all(f.pauli in TWO_QUBIT_PAULIS for f in faults)
        assert [f.location for f in draw_faults(example_flagged, NoiseModel(1.0, 0.0), rng)] == [1, 2]

    def test_sample_shot_noiseless(self, example_flagged):
        outcome = sample_shot(example_flagged, '+0+', NoiseModel(0.0), chunk_rng(0, 0, 0))
        assert not outcome.failure and not outcome.flagged


class TestInjectedFault:
    """The worked example: an X fault on the fan-out control, 100 shots for each of 8 inputs."""

    CFG = SimConfig(shots_per_input=100, max_inputs=8, seed=2024)

    def test_flagged_confusion_matrix(self, example_flagged):
        report = inject_error_experiment(example_flagged, example_fault(example_flagged), 0.1, self.CFG)
        t = report.tally
        assert t.total == 800
        assert t.fn == 0
        assert report.psfr == 0.0
        assert within_sigma(t.tp, 60, 600)
        assert within_sigma(t.fp, 20, 200)
        assert within_sigma(t.tn, 720, 800)
        assert abs(report.fr - 0.075) <= 3 * math.sqrt(0.075 * 0.925 / 800)
        masked = {s: tally for s, tally in report.per_input if s in ('+0+', '+++')}
        assert all(tally.tp == 0 for tally in masked.values())

    def test_flagless(self, example_body):
        report = inject_error_experiment(example_body, example_fault(example_body), 0.1, self.CFG)
        assert report.tally.tp == report.tally.fp == 0
        assert abs(report.fr - 0.075) <= 3 * math.sqrt(0.075 * 0.925 / 800)
        assert report.psfr == report.fr

    def test_certain_fault(self, example_body):
        report = inject_error_experiment(example_body, example_fault(example_body), 1.0, self.CFG)
        assert report.fr == 6 / 8

    def test_certain_fault_all_rejected(self, example_flagged):
        report = inject_error_experiment(example_flagged, example_fault(example_flagged), 1.0, self.CFG)
        assert report.acceptance_rate == 0.0
        assert report.psfr_undefined
        assert report.psfr == 0.0

    def test_zero_probability(self, example_flagged):
        report = inject_error_experiment(example_flagged, example_fault(example_flagged), 0.0, self.CFG)
        assert report.tally.tn == 800
        assert (report.fr, report.psfr, report.acceptance_rate) == (0.0, 0.0, 1.0)

    def test_bad_probability(self, example_body):
        with pytest.raises(ValueError):
            inject_error_experiment(example_body, example_fault(example_body), 1.5, self.CFG)


class TestEstimate:

    def test_noiseless(self):
        c = adder_like(3)
        flagged = compile_flagged(c, FlagBudget.logarithmic(5), size=3)
        report = estimate(c, flagged, NoiseModel(0.0), SimConfig(shots_per_input=500, max_inputs=10))
        assert (report.fr, report.psfr, report.acceptance_rate) == (0.0, 0.0, 1.0)

    def test_rates_match_tally(self):
        c = adder_like(2)
        flagged = compile_flagged(c, FlagBudget.fixed(3))
        report = estimate(c, flagged, NoiseModel(0.02, 1.0), SimConfig(shots_per_input=2000, max_inputs=8, seed=5))
        t = report.tally
        assert t.total == 2000 * 8
        assert report.fr == (t.tp + t.fn) / t.total
        assert report.psfr == t.fn / (t.fn + t.tn)
        assert report.acceptance_rate == (t.fn + t.tn) / t.total
        assert sum((tally for _, tally in report.per_input), ShotTally()) == t

    def test_flagless_run_has_no_flag_outcomes(self):
        c = adder_like(2)
        report = estimate(c, c, NoiseModel(0.02), SimConfig(shots_per_input=1000, max_inputs=8))
        assert report.tally.tp == report.tally.fp == 0
        assert report.psfr == report.fr

    @pytest.mark.parametrize('p', [0.005, 0.05])
    def test_perfect_flags_keep_flagless_fr(self, p):
        c = adder_like(3)
        flagged = compile_flagged(c, FlagBudget.linear())
        assert {f.flag_type for f in flagged.flags} == {FlagType.X, FlagType.Z}
        cfg = SimConfig(shots_per_input=3000, max_inputs=16, seed=13)
        flagless = estimate(c, c, NoiseModel(p), cfg)
        perfect = estimate(c, flagged, NoiseModel(p, 0.0), cfg)
        assert perfect.fr == flagless.fr
        assert perfect.tally.tp + perfect.tally.fn == flagless.tally.fn

    def test_body_mismatch(self):
        with pytest.raises(BodyMismatchError):
            estimate(adder_like(2), adder_like(3), NoiseModel(0.01), SimConfig(shots_per_input=10))

    def test_subsample_never_sees_more_failures(self):
        c = adder_like(3)
        full = estimate(c, c, NoiseModel(0.02), SimConfig(shots_per_input=2000, max_inputs=6, seed=9))
        sub = estimate(c, c, NoiseModel(0.02),
                       SimConfig(shots_per_input=2000, max_inputs=6, seed=9, stabilizer_subsample_r=2))
        assert sub.tally.fn <= full.tally.fn
        assert sub.tally.total == full.tally.total

    def test_seed_determinism(self):
        c = adder_like(2)
        flagged = compile_flagged(c, FlagBudget.fixed(2))
        cfg = SimConfig(shots_per_input=5000, max_inputs=8, seed=1)
        a = estimate(c, flagged, NoiseModel(0.01, 0.5), cfg)
        b = estimate(c, flagged, NoiseModel(0.01, 0.5), cfg)
        assert a.to_json() == b.to_json()

    @pytest.mark.parametrize('workers', [4, 16])
    def test_worker_count_does_not_change_results(self, workers):
        c = adder_like(2)
        flagged = compile_flagged(c, FlagBudget.fixed(2))
        base = SimConfig(shots_per_input=9000, max_inputs=4, seed=17)
        serial = estimate(c, flagged, NoiseModel(0.01, 1.0), base)
        parallel = estimate(c, flagged, NoiseModel(0.01, 1.0),
                            SimConfig(shots_per_input=9000, max_inputs=4, seed=17, workers=workers))
        assert json.dumps(serial.to_json()) == json.dumps(parallel.to_json())

    @pytest.mark.parametrize('p', [1e-3, 1e-2])
    def test_first_order_prediction(self, p):
        c = adder_like(2)
        flagged = compile_flagged(c, FlagBudget.fixed(2))
        noise = NoiseModel(p, 1.0)
        report = estimate(c, flagged, noise, SimConfig(shots_per_input=3125, max_inputs=32, seed=21))
        predicted = first_order_failure_rate(c, flagged, noise, [s for s, _ in report.per_input])
        n = report.tally.total
        sigma = math.sqrt(predicted * (1 - predicted) / n)
        # higher-order terms are bounded by a multiple of (noisy gates * p)^2
        slack = 2 * (noisy_cnot_count(flagged, noise) * p) ** 2
        assert abs(report.fr - predicted) <= 3 * sigma + slack


class TestReport:

    def test_json_and_csv(self, example_flagged):
        report = inject_error_experiment(example_flagged, example_fault(example_flagged), 0.1,
                                         SimConfig(shots_per_input=100, max_inputs=8, seed=1))
        payload = report.to_json()
        assert payload['schema_version'] == 1
        assert payload['inputs'] == 8
        assert payload['m'] is None
        assert len(payload['per_input']) == 8

        out = io.StringIO()
        write_csv([report.to_csv_row()], out)
        lines = out.getvalue().splitlines()
        assert lines[0] == '# medusa-csv schema=1'
        assert lines[1] == ','.join(CSV_COLUMNS)
        assert len(lines) == 3

    def test_csv_header_without_rows(self):
        out = io.StringIO()
        write_csv([], out)
        assert out.getvalue().splitlines() == ['# medusa-csv schema=1', ','.join(CSV_COLUMNS)]

    def test_fr_delta(self):
        flagless = RunReport(ShotTally(fn=10, tn=90), [], 3, 0, 0.01, 1.0, 100, 0)
        flagged = RunReport(ShotTally(tp=8, fp=2, fn=2, tn=88), [], 3, 1, 0.01, 0.0, 100, 0)
        assert flagless.fr == pytest.approx(0.1)
        assert flagged.psfr == pytest.approx(2 / 90)
        assert fr_delta(flagless, flagged) == pytest.approx(0.1 - 2 / 90)

    def test_standard_errors(self):
        report = RunReport(ShotTally(tp=5, fp=5, fn=10, tn=80), [], 3, 1, 0.01, 1.0, 100, 0)
        assert report.se_fr == pytest.approx(math.sqrt(0.15 * 0.85 / 100))
        assert report.se_psfr == pytest.approx(math.sqrt((10 / 90) * (80 / 90) / 90))


@pytest.mark.slow
class TestAcceptance:

    @pytest.mark.parametrize('n', [4, 6, 8])
    def test_perfect_flags_improve(self, n):
        c = adder_like(n)
        flagged = compile_flagged(c, FlagBudget.logarithmic(5), size=n)
        cfg = SimConfig(shots_per_input=1000, max_inputs=100, seed=31)
        flagless = estimate(c, c, NoiseModel(1e-3), cfg, size=n)
        perfect = estimate(c, flagged, NoiseModel(1e-3, 0.0), cfg, size=n)
        noisy = estimate(c, flagged, NoiseModel(1e-3, 1.0), cfg, size=n)
        sigma = math.hypot(perfect.se_psfr, noisy.se_psfr)
        assert perfect.psfr <= noisy.psfr - 3 * sigma
        assert perfect.psfr <= flagless.fr

    @staticmethod
    def gains(n, grid, seed):
        c = adder_like(n)
        flagged = compile_flagged(c, FlagBudget.logarithmic(5), size=n)
        cfg = SimConfig(shots_per_input=1000, max_inputs=100, seed=seed)
        return [fr_delta(estimate(c, c, NoiseModel(p), cfg), estimate(c, flagged, NoiseModel(p, 0.0), cfg))
                for p in grid]

    def test_gain_peaks_inside_noise_range(self):
        # the 4N-CNOT skeleton is small: at N=6 the gain only turns over just
        # above 0.1, so the interior peak is checked at N=12
        grid = np.geomspace(1e-4, 1e-1, 7)
        gains = self.gains(12, grid, seed=41)
        peak = int(np.argmax(gains))
        assert 0 < peak < len(grid) - 1, gains

    def test_gain_turns_over_past_grid_edge(self):
        gains = self.gains(6, [1e-2, 1e-1, 2e-1, 3e-1], seed=41)
        assert gains[0] < gains[1]
        assert gains[3] < gains[2] < gains[1], gains

    def test_peak_moves_down_with_size(self):
        grid = np.geomspace(1e-3, 3e-1, 6)
        small = int(np.argmax(self.gains(6, grid, seed=43)))
        large = int(np.argmax(self.gains(12, grid, seed=43)))
        assert large <= small
