"""
Exact stabilizer engine.

Canonical stabilizers of the noiseless circuit per input (stim's tableau
simulator), exact Pauli-frame propagation of faults through the circuit, and
a brute-force oracle on an independent CHP tableau that recomputes the same
outcome by explicit stabilizer-sign measurement.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import stim

from circuit import Circuit, Gate, GateKind, InitBasis
from errors import FaultLocationError, InputMismatchError, OracleSizeError
from tableau import Tableau, multiply_rows, symplectic_products

logger = logging.getLogger(__name__)

PAULI_CHARS = 'IXYZ'
# All non-identity two-qubit Paulis, indexed 1..15 as (control, target) = divmod(k, 4)
TWO_QUBIT_PAULIS: Tuple[str, ...] = tuple(a + b for a in PAULI_CHARS for b in PAULI_CHARS)[1:]
ORACLE_MAX_QUBITS = 12
_PAULI_OF_BITS = {(0, 0): 'I', (1, 0): 'X', (1, 1): 'Y', (0, 1): 'Z'}


@dataclass(frozen=True)
class PauliString:
    sign: int
    xs: Tuple[int, ...]
    zs: Tuple[int, ...]

    @classmethod
    def from_label(cls, label: str) -> 'PauliString':
        """Build from text such as '+XIZ' or '-ZZ' (sign optional)."""
        sign = -1 if label.startswith('-') else 1
        body = label.lstrip('+-')
        xs = tuple(1 if ch in 'XY' else 0 for ch in body)
        zs = tuple(1 if ch in 'ZY' else 0 for ch in body)
        if any(ch not in PAULI_CHARS for ch in body):
            raise ValueError(f"Invalid Pauli label {label!r}")
        return cls(sign, xs, zs)

    @classmethod
    def from_stim(cls, pauli: stim.PauliString) -> 'PauliString':
        xs, zs = pauli.to_numpy()
        return cls(-1 if pauli.sign == -1 else 1, tuple(int(v) for v in xs), tuple(int(v) for v in zs))

    @property
    def n_qubits(self) -> int:
        return len(self.xs)

    def commutes_with(self, other: 'PauliString') -> bool:
        return sum(a * d + b * c for a, b, c, d in zip(self.xs, self.zs, other.xs, other.zs)) % 2 == 0

    def __str__(self) -> str:
        chars = (_PAULI_OF_BITS[x, z] for x, z in zip(self.xs, self.zs))
        return ('+' if self.sign > 0 else '-') + ''.join(chars)


@dataclass(frozen=True)
class StabilizerSet:
    generators: Tuple[PauliString, ...]

    @property
    def n_qubits(self) -> int:
        return self.generators[0].n_qubits if self.generators else 0

    @cached_property
    def x_matrix(self) -> np.ndarray:
        return np.array([g.xs for g in self.generators], dtype=np.uint8).reshape(len(self.generators), -1)

    @cached_property
    def z_matrix(self) -> np.ndarray:
        return np.array([g.zs for g in self.generators], dtype=np.uint8).reshape(len(self.generators), -1)

    def labels(self) -> List[str]:
        return [str(g) for g in self.generators]

    def __len__(self) -> int:
        return len(self.generators)


@dataclass(frozen=True)
class FaultEvent:
    """Two-qubit Pauli applied to (control, target) right after gate `location`."""

    location: int
    pauli: str

    def __post_init__(self):
        if self.pauli not in TWO_QUBIT_PAULIS:
            raise FaultLocationError(f"Fault Pauli must be one of the 15 non-identity labels, got {self.pauli!r}")


@dataclass(frozen=True)
class FrameOutcome:
    stabilizer_flips: Tuple[int, ...]
    flag_triggers: Tuple[int, ...]

    @property
    def failure(self) -> bool:
        return any(self.stabilizer_flips)

    @property
    def flagged(self) -> bool:
        return any(self.flag_triggers)


def canonicalize(x: np.ndarray, z: np.ndarray, r: np.ndarray) -> StabilizerSet:
    """Reduce generator rows to the canonical, fully eliminated form.

    Pivots are taken qubit by qubit, first on an x bit then on a z bit;
    every other row holding the pivot bit is multiplied by the pivot row.
    """
    x = x.copy()
    z = z.copy()
    r = [int(v) for v in r]
    rows, n = x.shape
    pivot_row = 0
    for q in range(n):
        for bits in (x, z):
            candidates = [i for i in range(pivot_row, rows) if bits[i, q]]
            if not candidates:
                continue
            p = candidates[0]
            for i in range(rows):
                if i != p and bits[i, q]:
                    x[i], z[i], r[i] = multiply_rows(x[i], z[i], r[i], x[p], z[p], r[p])
            x[[pivot_row, p]] = x[[p, pivot_row]]
            z[[pivot_row, p]] = z[[p, pivot_row]]
            r[pivot_row], r[p] = r[p], r[pivot_row]
            pivot_row += 1

    generators = tuple(
        PauliString(-1 if r[i] else 1, tuple(int(v) for v in x[i]), tuple(int(v) for v in z[i]))
        for i in range(rows)
    )
    return StabilizerSet(generators)


def _check_inputs(c: Circuit, inputs: str) -> None:
    if len(inputs) != c.n_data:
        raise InputMismatchError(f"Input {inputs!r} has {len(inputs)} entries, circuit has {c.n_data} data qubits")
    if any(ch not in '0+' for ch in inputs):
        raise InputMismatchError(f"Input {inputs!r} must use only '0' and '+'")


def _prepare(c: Circuit, inputs: str) -> Tableau:
    tab = Tableau(c.n_qubits)
    for q, ch in enumerate(inputs):
        if ch == InitBasis.PLUS.value:
            tab.h(q)
    return tab


def stim_circuit(c: Circuit, inputs: Optional[str] = None,
                 gate_noise: Optional[Callable[[Gate], float]] = None) -> stim.Circuit:
    """Lower `c` to stim: H on '+' inputs, then the gates in order.

    With `gate_noise`, every CNOT whose probability is positive is followed by
    DEPOLARIZE2 on its (control, target) pair.
    """
    circuit = stim.Circuit()
    if inputs:
        plus = [q for q, ch in enumerate(inputs) if ch == InitBasis.PLUS.value]
        if plus:
            circuit.append('H', plus)
    for gate in c.gates:
        if gate.kind is GateKind.H:
            circuit.append('H', [gate.target])
            continue
        circuit.append('CX', [gate.control, gate.target])
        p = gate_noise(gate) if gate_noise is not None else 0.0
        if p > 0:
            circuit.append('DEPOLARIZE2', [gate.control, gate.target], p)
    return circuit


def canonical_stabilizers(c: Circuit, inputs: str) -> StabilizerSet:
    """Canonical generators of the noiseless output state for one input string.

    Same pivot order as `canonicalize`: X then Z per qubit, fully eliminated.
    """
    _check_inputs(c, inputs)
    sim = stim.TableauSimulator()
    sim.set_num_qubits(c.n_qubits)
    sim.do_circuit(stim_circuit(c, inputs))
    return StabilizerSet(tuple(PauliString.from_stim(s) for s in sim.canonical_stabilizers()))


def tableau_canonical_stabilizers(c: Circuit, inputs: str) -> StabilizerSet:
    """canonical_stabilizers recomputed on the CHP tableau."""
    _check_inputs(c, inputs)
    tab = _prepare(c, inputs)
    for gate in c.gates:
        if gate.kind is GateKind.CNOT:
            tab.cnot(gate.control, gate.target)
        else:
            tab.h(gate.target)
    return canonicalize(*tab.stabilizers())


def _faults_by_location(c: Circuit, faults: Iterable[FaultEvent]) -> Dict[int, List[FaultEvent]]:
    grouped: Dict[int, List[FaultEvent]] = defaultdict(list)
    for fault in faults:
        if not 0 <= fault.location < len(c.gates):
            raise FaultLocationError(f"Fault location {fault.location} outside 0..{len(c.gates) - 1}")
        if c.gates[fault.location].kind is not GateKind.CNOT:
            raise FaultLocationError(f"Fault location {fault.location} is not a CNOT")
        grouped[fault.location].append(fault)
    return grouped


def propagate_frame(c: Circuit, faults: Iterable[FaultEvent]) -> Tuple[np.ndarray, np.ndarray]:
    """Final Pauli frame (x bits, z bits) over all qubits after the faults."""
    grouped = _faults_by_location(c, faults)
    fx = np.zeros(c.n_qubits, dtype=np.uint8)
    fz = np.zeros(c.n_qubits, dtype=np.uint8)
    for i, gate in enumerate(c.gates):
        if gate.kind is GateKind.CNOT:
            fx[gate.target] ^= fx[gate.control]
            fz[gate.control] ^= fz[gate.target]
        else:
            fx[gate.target], fz[gate.target] = fz[gate.target], fx[gate.target]
        for fault in grouped.get(i, ()):
            for q, ch in zip(gate.qubits, fault.pauli):
                fx[q] ^= int(ch in 'XY')
                fz[q] ^= int(ch in 'ZY')
    return fx, fz


def frame_outcome(c: Circuit, fx: np.ndarray, fz: np.ndarray, reference: StabilizerSet) -> FrameOutcome:
    k = reference.n_qubits
    if k not in (c.n_data, c.n_qubits):
        raise ValueError(f"Reference covers {k} qubits; expected {c.n_data} or {c.n_qubits}")
    flips = symplectic_products(reference.x_matrix, reference.z_matrix, fx[:k], fz[:k])
    return FrameOutcome(tuple(int(v) for v in flips), tuple(int(v) for v in fx[c.n_data:]))


def propagate_faults(c: Circuit, faults: Sequence[FaultEvent], inputs: str,
                     reference: StabilizerSet) -> FrameOutcome:
    """Flips of the reference generators and flag triggers caused by `faults`."""
    _check_inputs(c, inputs)
    fx, fz = propagate_frame(c, faults)
    return frame_outcome(c, fx, fz, reference)


def brute_force_state_check(c: Circuit, faults: Sequence[FaultEvent], inputs: str,
                            reference: Optional[StabilizerSet] = None) -> FrameOutcome:
    """Recompute propagate_faults by simulating the faulty state and measuring signs.

    Without an explicit reference the flagless circuit's canonical set is used.
    """
    if c.n_qubits > ORACLE_MAX_QUBITS:
        raise OracleSizeError(f"Oracle limited to {ORACLE_MAX_QUBITS} qubits, circuit has {c.n_qubits}")
    _check_inputs(c, inputs)
    if reference is None:
        reference = tableau_canonical_stabilizers(c.strip_flags(), inputs)
    grouped = _faults_by_location(c, faults)

    tab = _prepare(c, inputs)
    for i, gate in enumerate(c.gates):
        if gate.kind is GateKind.CNOT:
            tab.cnot(gate.control, gate.target)
        else:
            tab.h(gate.target)
        for fault in grouped.get(i, ()):
            for q, ch in zip(gate.qubits, fault.pauli):
                tab.pauli(q, ch)

    pad = c.n_qubits - reference.n_qubits
    flips = []
    for g in reference.generators:
        xs = np.array(g.xs + (0,) * pad, dtype=np.uint8)
        zs = np.array(g.zs + (0,) * pad, dtype=np.uint8)
        outcome = tab.expectation(xs, zs, 0 if g.sign > 0 else 1)
        if outcome == 0:
            raise RuntimeError(f"Reference generator {g} is not deterministic on the faulty state")
        flips.append(1 if outcome < 0 else 0)

    triggers = []
    for flag in c.flags:
        zs = np.zeros(c.n_qubits, dtype=np.uint8)
        zs[flag.flag_qubit] = 1
        outcome = tab.expectation(np.zeros(c.n_qubits, dtype=np.uint8), zs, 0)
        if outcome == 0:
            raise RuntimeError(f"Flag qubit {flag.flag_qubit} has a random noiseless outcome")
        triggers.append(1 if outcome < 0 else 0)

    return FrameOutcome(tuple(flips), tuple(triggers))


def is_masked(outcome: FrameOutcome) -> bool:
    return not outcome.failure


def pairwise_commuting(stabilizers: StabilizerSet) -> bool:
    gens = stabilizers.generators
    return all(a.commutes_with(b) for i, a in enumerate(gens) for b in gens[i + 1:])


def gf2_rank(stabilizers: StabilizerSet) -> int:
    m = np.concatenate([stabilizers.x_matrix, stabilizers.z_matrix], axis=1).astype(np.uint8) % 2
    rank = 0
    rows, cols = m.shape
    for col in range(cols):
        pivots = [i for i in range(rank, rows) if m[i, col]]
        if not pivots:
            continue
        m[[rank, pivots[0]]] = m[[pivots[0], rank]]
        for i in range(rows):
            if i != rank and m[i, col]:
                m[i] ^= m[rank]
        rank += 1
    return rank
