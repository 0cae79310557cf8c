"""
Monte Carlo Failure-Rate Estimation

Depolarizing noise on CNOTs, vectorized Pauli-frame sampling, and the
confusion-matrix bookkeeping (TP/FP/FN/TN) behind FR, PSFR and acceptance.

Noisy frames come from stim's flip simulator in fixed-size chunks. Every chunk
is seeded from (seed, input index, chunk index), so tallies do not depend on
how many worker processes share the chunks. Single-shot and injected-fault
paths draw from Philox streams keyed the same way.
"""

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Dict, IO, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import stim

from circuit import Circuit, Gate, GateKind, GateRole
from errors import BodyMismatchError
from frames import (
    TWO_QUBIT_PAULIS,
    FaultEvent,
    FrameOutcome,
    StabilizerSet,
    canonical_stabilizers,
    frame_outcome,
    propagate_faults,
    propagate_frame,
    stim_circuit,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CHUNK_SHOTS = 4096
CSV_COLUMNS = ['n', 'p_ncs', 'm', 'flags', 'shots', 'tp', 'fp', 'fn', 'tn',
               'fr', 'psfr', 'acceptance', 'se_fr', 'se_psfr']

# stream tags separating independent uses of the same seed
_STREAM_SHOTS = 0
_STREAM_INPUTS = 1
_STREAM_SUBSAMPLE = 2


@dataclass(frozen=True)
class NoiseModel:
    p_ncs: float
    m: float = 1.0

    def __post_init__(self):
        if not 0 <= self.p_ncs <= 1:
            raise ValueError(f"p_ncs must lie in [0, 1], got {self.p_ncs}")
        if not 0 <= self.m <= 1:
            raise ValueError(f"m must lie in [0, 1], got {self.m}")

    @property
    def p_flag(self) -> float:
        return self.m * self.p_ncs

    def gate_probability(self, gate: Gate) -> float:
        if gate.kind is not GateKind.CNOT:
            return 0.0
        return self.p_ncs if gate.role is GateRole.BODY else self.p_flag


@dataclass(frozen=True)
class SimConfig:
    shots_per_input: int = 10_000
    max_inputs: int = 100
    seed: int = 0
    stabilizer_subsample_r: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if self.shots_per_input < 1:
            raise ValueError("shots_per_input must be at least 1")
        if self.max_inputs < 1:
            raise ValueError("max_inputs must be at least 1")
        if self.stabilizer_subsample_r is not None and self.stabilizer_subsample_r < 1:
            raise ValueError("stabilizer_subsample_r must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class ShotTally:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accepted(self) -> int:
        return self.fn + self.tn

    def add(self, failure: bool, flagged: bool, count: int = 1) -> None:
        if failure and flagged:
            self.tp += count
        elif flagged:
            self.fp += count
        elif failure:
            self.fn += count
        else:
            self.tn += count

    def __add__(self, other: 'ShotTally') -> 'ShotTally':
        return ShotTally(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def to_dict(self) -> Dict[str, int]:
        return {'tp': self.tp, 'fp': self.fp, 'fn': self.fn, 'tn': self.tn}


def _binomial_se(rate: float, n: int) -> float:
    return math.sqrt(rate * (1 - rate) / n) if n else 0.0


@dataclass
class RunReport:
    tally: ShotTally
    per_input: List[Tuple[str, ShotTally]]
    n_data: int
    n_flags: int
    p_ncs: float
    m: Optional[float]
    shots_per_input: int
    seed: int
    size: Optional[int] = None
    fr: float = field(init=False)
    psfr: float = field(init=False)
    acceptance_rate: float = field(init=False)
    se_fr: float = field(init=False)
    se_psfr: float = field(init=False)
    se_acceptance: float = field(init=False)
    psfr_undefined: bool = field(init=False)

    def __post_init__(self):
        t = self.tally
        total = t.total
        self.fr = (t.tp + t.fn) / total if total else 0.0
        self.psfr_undefined = t.accepted == 0
        self.psfr = 0.0 if self.psfr_undefined else t.fn / t.accepted
        self.acceptance_rate = t.accepted / total if total else 0.0
        self.se_fr = _binomial_se(self.fr, total)
        self.se_psfr = _binomial_se(self.psfr, t.accepted)
        self.se_acceptance = _binomial_se(self.acceptance_rate, total)
        if self.psfr_undefined and total:
            logger.warning("Every shot was rejected by the flags; PSFR reported as 0")

    def to_json(self) -> Dict:
        return {
            'schema_version': SCHEMA_VERSION,
            'n_data': self.n_data,
            'n_flags': self.n_flags,
            'size': self.size,
            'p_ncs': self.p_ncs,
            'm': self.m,
            'shots_per_input': self.shots_per_input,
            'inputs': len(self.per_input),
            'seed': self.seed,
            'tally': self.tally.to_dict(),
            'fr': self.fr,
            'psfr': self.psfr,
            'acceptance_rate': self.acceptance_rate,
            'se_fr': self.se_fr,
            'se_psfr': self.se_psfr,
            'se_acceptance': self.se_acceptance,
            'psfr_undefined': self.psfr_undefined,
            'per_input': [{'input': s, **tally.to_dict()} for s, tally in self.per_input],
        }

    def to_csv_row(self) -> Dict:
        t = self.tally
        return {
            'n': self.size if self.size is not None else self.n_data,
            'p_ncs': self.p_ncs,
            'm': '' if self.m is None else self.m,
            'flags': self.n_flags,
            'shots': t.total,
            'tp': t.tp, 'fp': t.fp, 'fn': t.fn, 'tn': t.tn,
            'fr': self.fr,
            'psfr': self.psfr,
            'acceptance': self.acceptance_rate,
            'se_fr': self.se_fr,
            'se_psfr': self.se_psfr,
        }


def write_csv(rows: Iterable[Dict], out: IO, columns: Sequence[str] = CSV_COLUMNS) -> None:
    """Write rows with the schema comment and header row always present."""
    out.write(f"# medusa-csv schema={SCHEMA_VERSION}\n")
    writer = csv.DictWriter(out, fieldnames=list(columns), lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def fr_delta(flagless: RunReport, flagged: RunReport) -> float:
    """Failure-rate gain from flags: flagless FR minus flagged PSFR."""
    return flagless.fr - flagged.psfr


def chunk_rng(seed: int, input_index: int, chunk_index: int) -> np.random.Generator:
    key = np.random.SeedSequence([seed, _STREAM_SHOTS, input_index, chunk_index])
    return np.random.Generator(np.random.Philox(key))


def frame_seed(seed: int, input_index: int, chunk_index: int) -> int:
    """63-bit stim seed for one chunk, derived like chunk_rng's stream."""
    key = np.random.SeedSequence([seed, _STREAM_SHOTS, input_index, chunk_index])
    return int(key.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def sample_inputs(c: Circuit, cfg: SimConfig) -> List[str]:
    """All 2^n input strings when they fit in max_inputs, else distinct seeded draws."""
    n = c.n_data
    if n < 63 and 2 ** n <= cfg.max_inputs:
        return [''.join(bits) for bits in itertools.product('0+', repeat=n)]

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _STREAM_INPUTS]))
    seen = set()
    inputs: List[str] = []
    while len(inputs) < cfg.max_inputs:
        s = ''.join('+' if b else '0' for b in rng.integers(0, 2, size=n))
        if s not in seen:
            seen.add(s)
            inputs.append(s)
    return inputs


def draw_faults(c: Circuit, noise: NoiseModel, rng: np.random.Generator) -> List[FaultEvent]:
    faults = []
    for i, gate in enumerate(c.gates):
        p = noise.gate_probability(gate)
        if p > 0 and rng.random() < p:
            faults.append(FaultEvent(i, TWO_QUBIT_PAULIS[int(rng.integers(1, 16)) - 1]))
    return faults


def sample_shot(c: Circuit, inputs: str, noise: NoiseModel, rng: np.random.Generator,
                reference: Optional[StabilizerSet] = None) -> FrameOutcome:
    """One noisy shot; the reference defaults to the flagless circuit's stabilizers."""
    if reference is None:
        reference = canonical_stabilizers(c.strip_flags(), inputs)
    return propagate_faults(c, draw_faults(c, noise, rng), inputs, reference)


def sample_frames(c: Circuit, noise: NoiseModel, shots: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Final Pauli frames for a batch of shots as (qubits x shots) bit arrays."""
    sim = stim.FlipSimulator(batch_size=shots, num_qubits=c.n_qubits,
                             disable_stabilizer_randomization=True, seed=seed)
    sim.do(stim_circuit(c, gate_noise=noise.gate_probability))
    frames = sim.to_numpy(output_xs=True, output_zs=True)
    return frames[0].astype(np.uint8), frames[1].astype(np.uint8)


def classify_frames(fx: np.ndarray, fz: np.ndarray, n_data: int,
                    ref_x: np.ndarray, ref_z: np.ndarray) -> ShotTally:
    flips = (ref_z.astype(np.int32) @ fx[:n_data].astype(np.int32)
             + ref_x.astype(np.int32) @ fz[:n_data].astype(np.int32)) % 2
    failure = flips.any(axis=0)
    flagged = fx[n_data:].any(axis=0)
    return ShotTally(
        tp=int(np.count_nonzero(failure & flagged)),
        fp=int(np.count_nonzero(~failure & flagged)),
        fn=int(np.count_nonzero(failure & ~flagged)),
        tn=int(np.count_nonzero(~failure & ~flagged)),
    )


def select_generators(reference: StabilizerSet, r: Optional[int], seed: int,
                      input_index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Reference rows to check: all, or a seeded subset of r per input."""
    rows = np.arange(len(reference))
    if r is not None and r < len(reference):
        rng = np.random.default_rng(np.random.SeedSequence([seed, _STREAM_SUBSAMPLE, input_index]))
        rows = np.sort(rng.choice(len(reference), size=r, replace=False))
    return reference.x_matrix[rows], reference.z_matrix[rows]


@dataclass(frozen=True)
class _EstimateJob:
    circuit: Circuit
    noise: NoiseModel
    seed: int
    references: Tuple[Tuple[np.ndarray, np.ndarray], ...]


def _run_chunk(task: Tuple[_EstimateJob, int, int, int]) -> Tuple[int, ShotTally]:
    job, input_index, chunk_index, shots = task
    fx, fz = sample_frames(job.circuit, job.noise, shots, frame_seed(job.seed, input_index, chunk_index))
    ref_x, ref_z = job.references[input_index]
    tally = classify_frames(fx, fz, job.circuit.n_data, ref_x, ref_z)
    logger.debug(f"Chunk ({input_index}, {chunk_index}): {tally.to_dict()}")
    return input_index, tally


def _chunks(shots: int) -> List[Tuple[int, int]]:
    return [(k, min(CHUNK_SHOTS, shots - k * CHUNK_SHOTS)) for k in range(math.ceil(shots / CHUNK_SHOTS))]


def map_tasks(fn: Callable, tasks: List, workers: int) -> List:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with Pool(processes=workers) as pool:
        return pool.map(fn, tasks)


def _same_body(a: Circuit, b: Circuit) -> bool:
    return a.n_data == b.n_data and a.body == b.body


def estimate(c_flagless: Circuit, c_flagged: Circuit, noise: NoiseModel, cfg: SimConfig,
             size: Optional[int] = None) -> RunReport:
    """FR / PSFR / acceptance of the flagged circuit against flagless references."""
    if not _same_body(c_flagless, c_flagged):
        raise BodyMismatchError("Flagged circuit does not share the flagless circuit's body")
    body = c_flagless.strip_flags()
    inputs = sample_inputs(body, cfg)

    references = tuple(
        select_generators(canonical_stabilizers(body, s), cfg.stabilizer_subsample_r, cfg.seed, i)
        for i, s in enumerate(inputs)
    )
    job = _EstimateJob(c_flagged, noise, cfg.seed, references)
    tasks = [(job, i, k, shots) for i in range(len(inputs)) for k, shots in _chunks(cfg.shots_per_input)]

    per_input = {i: ShotTally() for i in range(len(inputs))}
    for i, tally in map_tasks(_run_chunk, tasks, cfg.workers):
        per_input[i] = per_input[i] + tally

    total = sum(per_input.values(), ShotTally())
    report = RunReport(
        tally=total,
        per_input=[(s, per_input[i]) for i, s in enumerate(inputs)],
        n_data=c_flagged.n_data,
        n_flags=c_flagged.n_flags,
        p_ncs=noise.p_ncs,
        m=noise.m,
        shots_per_input=cfg.shots_per_input,
        seed=cfg.seed,
        size=size,
    )
    logger.info(f"Estimated {c_flagged.n_data}+{c_flagged.n_flags} qubits at p={noise.p_ncs:g}, m={noise.m:g}: "
                f"fr={report.fr:.5f} psfr={report.psfr:.5f} acceptance={report.acceptance_rate:.4f}")
    return report


def inject_error_experiment(c: Circuit, fault: FaultEvent, prob: float, cfg: SimConfig) -> RunReport:
    """Inject exactly `fault` with probability `prob` per shot, no other noise."""
    if not 0 <= prob <= 1:
        raise ValueError(f"prob must lie in [0, 1], got {prob}")
    body = c.strip_flags()
    inputs = sample_inputs(body, cfg)

    per_input: List[Tuple[str, ShotTally]] = []
    for i, s in enumerate(inputs):
        outcome = propagate_faults(c, [fault], s, canonical_stabilizers(body, s))
        tally = ShotTally()
        for k, shots in _chunks(cfg.shots_per_input):
            hits = int(np.count_nonzero(chunk_rng(cfg.seed, i, k).random(shots) < prob))
            tally.add(outcome.failure, outcome.flagged, hits)
            tally.tn += shots - hits
        per_input.append((s, tally))

    report = RunReport(
        tally=sum((t for _, t in per_input), ShotTally()),
        per_input=per_input,
        n_data=c.n_data,
        n_flags=c.n_flags,
        p_ncs=prob,
        m=None,
        shots_per_input=cfg.shots_per_input,
        seed=cfg.seed,
    )
    logger.info(f"Injected {fault.pauli} at gate {fault.location} with p={prob:g}: "
                f"fr={report.fr:.4f} psfr={report.psfr:.4f}")
    return report


def first_order_failure_rate(c_flagless: Circuit, c_flagged: Circuit, noise: NoiseModel,
                             inputs: Sequence[str]) -> float:
    """Exhaustive single-fault prediction of FR, averaged over `inputs`."""
    if not _same_body(c_flagless, c_flagged):
        raise BodyMismatchError("Flagged circuit does not share the flagless circuit's body")
    body = c_flagless.strip_flags()
    references = [canonical_stabilizers(body, s) for s in inputs]

    predicted = 0.0
    for i, gate in enumerate(c_flagged.gates):
        p = noise.gate_probability(gate)
        if p <= 0:
            continue
        for label in TWO_QUBIT_PAULIS:
            fx, fz = propagate_frame(c_flagged, [FaultEvent(i, label)])
            unmasked = sum(frame_outcome(c_flagged, fx, fz, ref).failure for ref in references)
            predicted += p / len(TWO_QUBIT_PAULIS) * unmasked / len(references)
    return predicted
