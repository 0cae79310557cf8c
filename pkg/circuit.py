"""
Circuit Intermediate Representation

CNOT-only (ICM) circuits with flag annotations, their validation, and the
line-oriented v1 text format used to exchange them between commands.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from errors import CircuitSyntaxError, CircuitValidationError

logger = logging.getLogger(__name__)


class InitBasis(Enum):
    ZERO = '0'
    PLUS = '+'


class QubitRole(Enum):
    DATA = 'data'
    FLAG_X = 'flag_x'
    FLAG_Z = 'flag_z'


class GateKind(Enum):
    CNOT = 'CNOT'
    H = 'H'


class GateRole(Enum):
    BODY = 'body'
    FLAG_GADGET = 'flag_gadget'


class FlagType(Enum):
    X = 'X'
    Z = 'Z'


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    target: int
    control: Optional[int] = None
    role: GateRole = GateRole.BODY

    @classmethod
    def cnot(cls, control: int, target: int, role: GateRole = GateRole.BODY) -> 'Gate':
        return cls(GateKind.CNOT, target, control, role)

    @classmethod
    def h(cls, target: int, role: GateRole = GateRole.FLAG_GADGET) -> 'Gate':
        return cls(GateKind.H, target, None, role)

    @property
    def qubits(self) -> Tuple[int, ...]:
        if self.kind is GateKind.CNOT:
            return (self.control, self.target)
        return (self.target,)

    def __str__(self) -> str:
        return f"{self.kind.value} {' '.join(map(str, self.qubits))}"


@dataclass(frozen=True)
class FlagAnnotation:
    """A flag qubit guarding one data qubit over a window of body gates."""

    flag_type: FlagType
    data_qubit: int
    window_start: int
    window_end: int
    flag_qubit: int

    def protects(self, gate: Gate) -> bool:
        """True if `gate` is a CNOT counted toward this flag's weight."""
        if gate.kind is not GateKind.CNOT:
            return False
        if self.flag_type is FlagType.X:
            return gate.control == self.data_qubit
        return gate.target == self.data_qubit

    def conflicts(self, gate: Gate) -> bool:
        """True if the data qubit holds the opposite role in `gate`."""
        if gate.kind is not GateKind.CNOT:
            return False
        if self.flag_type is FlagType.X:
            return gate.target == self.data_qubit
        return gate.control == self.data_qubit


@dataclass(frozen=True)
class Violation:
    kind: str
    location: Tuple[Tuple[str, int], ...] = ()
    # (statement, index) this violation traces back to; used for line numbers
    source: Optional[Tuple[str, int]] = field(default=None, compare=False)

    def __str__(self) -> str:
        args = ', '.join(f"{k}={v}" for k, v in self.location)
        return f"{self.kind}({args})"


@dataclass(frozen=True)
class Circuit:
    """An ICM circuit: data qubits, body CNOTs and flag annotations.

    Flag gadget gates are never stored; `gates` lowers them from `flags`
    so annotations survive recompilation. Instances are immutable.
    """

    n_data: int
    data_inits: Tuple[InitBasis, ...]
    body: Tuple[Gate, ...] = ()
    flags: Tuple[FlagAnnotation, ...] = ()

    @property
    def n_flags(self) -> int:
        return len(self.flags)

    @property
    def n_qubits(self) -> int:
        return self.n_data + self.n_flags

    @property
    def inits(self) -> Tuple[InitBasis, ...]:
        return self.data_inits + (InitBasis.ZERO,) * self.n_flags

    @property
    def measured_qubits(self) -> Tuple[int, ...]:
        return tuple(range(self.n_qubits))

    def qubit_role(self, q: int) -> QubitRole:
        if q < self.n_data:
            return QubitRole.DATA
        flag = self.flags[q - self.n_data]
        return QubitRole.FLAG_X if flag.flag_type is FlagType.X else QubitRole.FLAG_Z

    @cached_property
    def gates(self) -> Tuple[Gate, ...]:
        opening: Dict[int, List[FlagAnnotation]] = defaultdict(list)
        closing: Dict[int, List[FlagAnnotation]] = defaultdict(list)
        for flag in sorted(self.flags, key=lambda f: f.flag_qubit):
            opening[flag.window_start].append(flag)
            closing[flag.window_end].append(flag)

        lowered: List[Gate] = []
        for k, gate in enumerate(self.body):
            for flag in opening.get(k, ()):
                lowered.extend(_open_gadget(flag))
            lowered.append(gate)
            for flag in closing.get(k, ()):
                lowered.extend(_close_gadget(flag))
        return tuple(lowered)

    @cached_property
    def body_positions(self) -> Tuple[int, ...]:
        """Index into `gates` of each body gate."""
        return tuple(i for i, g in enumerate(self.gates) if g.role is GateRole.BODY)

    @property
    def input_string(self) -> str:
        return ''.join(b.value for b in self.data_inits)

    def strip_flags(self) -> 'Circuit':
        return replace(self, flags=())

    def with_inputs(self, inputs: str) -> 'Circuit':
        return replace(self, data_inits=parse_inputs(inputs))

    def with_flags(self, specs: Iterable[Tuple[FlagType, int, int, int]]) -> 'Circuit':
        """Return a copy whose flags are `specs`, numbered after the data qubits."""
        flags = tuple(
            FlagAnnotation(flag_type, q, start, end, self.n_data + j)
            for j, (flag_type, q, start, end) in enumerate(specs)
        )
        return replace(self, flags=flags)

    def flag_weight(self, flag: FlagAnnotation) -> int:
        window = self.body[flag.window_start:flag.window_end + 1]
        return sum(1 for g in window if flag.protects(g))


def _open_gadget(flag: FlagAnnotation) -> List[Gate]:
    if flag.flag_type is FlagType.X:
        return [Gate.cnot(flag.data_qubit, flag.flag_qubit, GateRole.FLAG_GADGET)]
    return [Gate.h(flag.flag_qubit),
            Gate.cnot(flag.flag_qubit, flag.data_qubit, GateRole.FLAG_GADGET)]


def _close_gadget(flag: FlagAnnotation) -> List[Gate]:
    if flag.flag_type is FlagType.X:
        return [Gate.cnot(flag.data_qubit, flag.flag_qubit, GateRole.FLAG_GADGET)]
    return [Gate.cnot(flag.flag_qubit, flag.data_qubit, GateRole.FLAG_GADGET),
            Gate.h(flag.flag_qubit)]


def parse_inputs(inputs: str) -> Tuple[InitBasis, ...]:
    try:
        return tuple(InitBasis(ch) for ch in inputs)
    except ValueError:
        raise ValueError(f"Input string must use only '0' and '+': {inputs!r}")


def validate(c: Circuit) -> List[Violation]:
    """Check every circuit invariant; violations are returned, never raised."""
    violations: List[Violation] = []

    if c.n_data < 1:
        violations.append(Violation('NoDataQubits', (('n', c.n_data),)))
    if len(c.data_inits) != c.n_data:
        violations.append(Violation('InitCountMismatch', (('expected', c.n_data), ('got', len(c.data_inits)))))

    for k, gate in enumerate(c.body):
        where = ('gate', k)
        if gate.role is not GateRole.BODY:
            violations.append(Violation('GadgetInBody', (where,), where))
        if gate.kind is GateKind.H:
            violations.append(Violation('BodyHadamard', (where,), where))
        for q in gate.qubits:
            if q is None or not 0 <= q < c.n_data:
                violations.append(Violation('IndexOutOfRange', (where, ('q', -1 if q is None else q)), where))
        if gate.kind is GateKind.CNOT and gate.control == gate.target:
            violations.append(Violation('SelfLoop', (where,), where))

    seen: Dict[int, int] = {}
    for j, flag in enumerate(c.flags):
        where = ('flag', j)
        if flag.flag_qubit != c.n_data + j:
            violations.append(Violation('FlagNumbering', (where, ('q', flag.flag_qubit)), where))
        if not 0 <= flag.data_qubit < c.n_data:
            violations.append(Violation('IndexOutOfRange', (where, ('q', flag.data_qubit)), where))
            continue
        if flag.data_qubit in seen:
            violations.append(Violation('UniquenessViolated', (('q', flag.data_qubit),), where))
        seen.setdefault(flag.data_qubit, j)

        if not 0 <= flag.window_start <= flag.window_end < len(c.body):
            violations.append(Violation('WindowOutOfRange', (where,), where))
            continue
        window = c.body[flag.window_start:flag.window_end + 1]
        if not any(flag.protects(g) for g in window):
            violations.append(Violation('EmptyFlagWindow', (where,), where))
        if any(flag.conflicts(g) for g in window):
            violations.append(Violation('MixedRoleWindow', (where,), where))

    flag_qubits = {f.flag_qubit for f in c.flags}
    for i, gate in enumerate(c.gates):
        if gate.role is not GateRole.FLAG_GADGET:
            continue
        owners = [q for q in gate.qubits if q in flag_qubits]
        if len(owners) != 1:
            violations.append(Violation('UnattributedGadget', (('gate', i),)))

    return violations


def _check(c: Circuit, gate_lines: Sequence[int] = (), flag_lines: Sequence[int] = ()) -> Circuit:
    violations = validate(c)
    if violations:
        line_no = 0
        source = violations[0].source
        if source is not None:
            lines = gate_lines if source[0] == 'gate' else flag_lines
            if source[1] < len(lines):
                line_no = lines[source[1]]
        raise CircuitValidationError(violations, line_no)
    return c


def _int_arg(token: str, line_no: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise CircuitSyntaxError(line_no, f"expected a non-negative integer, got {token!r}")
    if value < 0:
        raise CircuitSyntaxError(line_no, f"expected a non-negative integer, got {token!r}")
    return value


def _arity(args: List[str], count: int, keyword: str, line_no: int) -> None:
    if len(args) != count:
        raise CircuitSyntaxError(line_no, f"{keyword} takes {count} argument(s), got {len(args)}")


def parse_circuit(text: str) -> Circuit:
    """Parse and validate a circuit in text format v1."""
    n_data: Optional[int] = None
    inputs: Dict[int, InitBasis] = {}
    body: List[Gate] = []
    flag_specs: List[Tuple[FlagType, int, int, int]] = []
    gate_lines: List[int] = []
    flag_lines: List[int] = []

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        keyword, *args = line.split()
        keyword = keyword.upper()

        if n_data is None:
            if keyword != 'QUBITS':
                raise CircuitSyntaxError(line_no, "QUBITS must be the first statement")
            _arity(args, 1, keyword, line_no)
            n_data = _int_arg(args[0], line_no)
            if n_data < 1:
                raise CircuitSyntaxError(line_no, "QUBITS must be at least 1")
            continue

        if keyword == 'QUBITS':
            raise CircuitSyntaxError(line_no, "QUBITS may appear only once")
        elif keyword == 'INPUT':
            _arity(args, 2, keyword, line_no)
            q = _int_arg(args[0], line_no)
            if q >= n_data:
                raise CircuitValidationError([Violation('IndexOutOfRange', (('input', q),))], line_no)
            if q in inputs:
                raise CircuitValidationError([Violation('DuplicateInput', (('q', q),))], line_no)
            try:
                inputs[q] = InitBasis(args[1])
            except ValueError:
                raise CircuitSyntaxError(line_no, f"INPUT basis must be 0 or +, got {args[1]!r}")
        elif keyword == 'CNOT':
            _arity(args, 2, keyword, line_no)
            body.append(Gate.cnot(_int_arg(args[0], line_no), _int_arg(args[1], line_no)))
            gate_lines.append(line_no)
        elif keyword == 'FLAG':
            _arity(args, 4, keyword, line_no)
            try:
                flag_type = FlagType(args[0].upper())
            except ValueError:
                raise CircuitSyntaxError(line_no, f"FLAG type must be X or Z, got {args[0]!r}")
            flag_specs.append((flag_type, *(_int_arg(a, line_no) for a in args[1:])))
            flag_lines.append(line_no)
        else:
            raise CircuitSyntaxError(line_no, f"unknown statement {keyword!r}")

    if n_data is None:
        raise CircuitSyntaxError(1, "missing QUBITS statement")
    missing = [q for q in range(n_data) if q not in inputs]
    if missing:
        raise CircuitValidationError([Violation('MissingInput', (('q', q),)) for q in missing])

    circuit = Circuit(
        n_data=n_data,
        data_inits=tuple(inputs[q] for q in range(n_data)),
        body=tuple(body),
    ).with_flags(flag_specs)
    logger.debug(f"Parsed circuit: {n_data} data qubits, {len(body)} CNOTs, {len(flag_specs)} flags")
    return _check(circuit, gate_lines, flag_lines)


def serialize_circuit(c: Circuit) -> str:
    lines = [f"QUBITS {c.n_data}"]
    lines.extend(f"INPUT {q} {basis.value}" for q, basis in enumerate(c.data_inits))
    lines.extend(f"CNOT {g.control} {g.target}" for g in c.body)
    for flag in sorted(c.flags, key=lambda f: f.flag_qubit):
        lines.append(f"FLAG {flag.flag_type.value} {flag.data_qubit} {flag.window_start} {flag.window_end}")
    return '\n'.join(lines) + '\n'


def read_circuit(path) -> Circuit:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_circuit(f.read())


def write_circuit(c: Circuit, path) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(serialize_circuit(c))
