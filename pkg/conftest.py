"""
Shared circuit fixtures.

The three-qubit fan-out circuit appears in two gate orders: CNOT 0 1 then
CNOT 0 2 (the X-flag example), and CNOT 0 2 then CNOT 0 1 (the propagation
example whose X fault on qubit 0, between the two CNOTs, ends up on qubits
0, 1 and the flag).
"""

import pytest

from circuit import Circuit, FlagType, Gate, InitBasis
from frames import FaultEvent

ALL_INPUTS_3 = ['000', '+00', '++0', '+0+', '0+0', '0++', '00+', '+++']


def three_qubit(*pairs) -> Circuit:
    return Circuit(n_data=3, data_inits=(InitBasis.ZERO,) * 3,
                   body=tuple(Gate.cnot(c, t) for c, t in pairs))


@pytest.fixture
def fanout_body() -> Circuit:
    return three_qubit((0, 1), (0, 2))


@pytest.fixture
def fanout_flagged(fanout_body) -> Circuit:
    return fanout_body.with_flags([(FlagType.X, 0, 0, 1)])


@pytest.fixture
def example_body() -> Circuit:
    return three_qubit((0, 2), (0, 1))


@pytest.fixture
def example_flagged(example_body) -> Circuit:
    return example_body.with_flags([(FlagType.X, 0, 0, 1)])


def example_fault(c: Circuit) -> FaultEvent:
    """X on qubit 0 right after the first body CNOT (control side)."""
    return FaultEvent(c.body_positions[0], 'XI')
