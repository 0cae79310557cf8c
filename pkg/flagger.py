"""
Flag Insertion Pass

Enumerates unique X/Z flag candidates for a flagless ICM circuit, ranks
them by weight and compiles the best ranked ones into the circuit.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple

from circuit import Circuit, FlagType, validate
from errors import CircuitValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlagCandidate:
    flag_type: FlagType
    data_qubit: int
    window_start: int
    window_end: int
    weight: int


class BudgetPolicy(Enum):
    LOGARITHMIC = 'log'
    LINEAR = 'linear'
    FIXED = 'fixed'


@dataclass(frozen=True)
class FlagBudget:
    policy: BudgetPolicy
    value: float = 0

    @classmethod
    def logarithmic(cls, coefficient: float = 5) -> 'FlagBudget':
        return cls(BudgetPolicy.LOGARITHMIC, coefficient)

    @classmethod
    def linear(cls) -> 'FlagBudget':
        return cls(BudgetPolicy.LINEAR)

    @classmethod
    def fixed(cls, k: int) -> 'FlagBudget':
        return cls(BudgetPolicy.FIXED, k)

    def count(self, size: int) -> int:
        """Requested number of flags for a circuit of the given size."""
        if self.policy is BudgetPolicy.LOGARITHMIC:
            return int(math.floor(self.value * math.log2(size))) if size > 1 else 0
        if self.policy is BudgetPolicy.LINEAR:
            return size
        return int(self.value)

    def __str__(self) -> str:
        if self.policy is BudgetPolicy.LOGARITHMIC:
            return f"log:{self.value:g}"
        if self.policy is BudgetPolicy.LINEAR:
            return 'linear'
        return f"fixed:{int(self.value)}"


def parse_budget(text: str) -> FlagBudget:
    """Parse 'log:C', 'linear' or 'fixed:K'."""
    name, _, arg = text.strip().lower().partition(':')
    try:
        if name == 'log':
            return FlagBudget.logarithmic(float(arg) if arg else 5)
        if name == 'linear' and not arg:
            return FlagBudget.linear()
        if name == 'fixed':
            k = int(arg)
            if k < 0:
                raise ValueError(k)
            return FlagBudget.fixed(k)
    except ValueError:
        pass
    raise ValueError(f"Invalid budget {text!r}; expected log:C, linear or fixed:K")


def _longest_run(positions: List[Tuple[int, bool]]) -> Optional[Tuple[int, int, int]]:
    """Longest run of `True` roles in a qubit's gate sequence as (start, end, length)."""
    best = None
    run: List[int] = []
    for gate_index, wanted in positions + [(-1, False)]:
        if wanted:
            run.append(gate_index)
            continue
        if run and (best is None or len(run) > best[2]):
            best = (run[0], run[-1], len(run))
        run = []
    return best


def enumerate_candidates(c: Circuit) -> List[FlagCandidate]:
    """At most one X and one Z candidate per data qubit.

    A qubit's CNOTs are split into runs where it keeps the same role; the X
    candidate spans the longest control run, the Z candidate the longest
    target run (earliest on ties). Single-role qubits get first-to-last spans.
    """
    if c.flags:
        raise ValueError("enumerate_candidates expects a flagless circuit")

    touches: Dict[int, List[Tuple[int, bool]]] = {q: [] for q in range(c.n_data)}
    for k, gate in enumerate(c.body):
        touches[gate.control].append((k, True))
        touches[gate.target].append((k, False))

    candidates: List[FlagCandidate] = []
    for q in range(c.n_data):
        for flag_type, role in ((FlagType.X, True), (FlagType.Z, False)):
            run = _longest_run([(k, is_control == role) for k, is_control in touches[q]])
            if run is not None:
                candidates.append(FlagCandidate(flag_type, q, run[0], run[1], run[2]))

    logger.debug(f"Enumerated {len(candidates)} flag candidates over {c.n_data} data qubits")
    return candidates


def rank_candidates(cands: Sequence[FlagCandidate]) -> List[FlagCandidate]:
    """Descending weight; ties by ascending data qubit, X before Z."""
    type_order = {FlagType.X: 0, FlagType.Z: 1}
    return sorted(cands, key=lambda f: (-f.weight, f.data_qubit, type_order[f.flag_type]))


def insert_flags(c: Circuit, ranked: Sequence[FlagCandidate], budget: FlagBudget,
                 size: Optional[int] = None) -> Circuit:
    """Greedily compile the best ranked unique flags into `c`.

    The budget is evaluated over `size` (defaults to the data-qubit count).
    """
    if c.flags:
        raise ValueError("insert_flags expects a flagless circuit")
    requested = min(budget.count(c.n_data if size is None else size), c.n_data)
    if requested <= 0:
        return c

    chosen: List[FlagCandidate] = []
    flagged: Set[int] = set()
    for cand in ranked:
        if len(chosen) >= requested:
            break
        if cand.data_qubit in flagged:
            continue
        chosen.append(cand)
        flagged.add(cand.data_qubit)

    flagged_circuit = c.with_flags((f.flag_type, f.data_qubit, f.window_start, f.window_end) for f in chosen)
    violations = validate(flagged_circuit)
    if violations:
        raise CircuitValidationError(violations)
    logger.info(f"Inserted {len(chosen)} of {requested} requested flags "
                f"(weights {[f.weight for f in chosen]})")
    return flagged_circuit


def compile_flagged(c: Circuit, budget: FlagBudget, size: Optional[int] = None) -> Circuit:
    """enumerate -> rank -> insert in one call."""
    return insert_flags(c, rank_candidates(enumerate_candidates(c)), budget, size)
