"""
Adder-Like Benchmark Generator

CNOT skeletons of a ripple-carry adder (Toffolis dropped), giving a circuit
family with the same structure at every operand width N.
"""

import logging
from dataclasses import dataclass
from typing import List

from circuit import Circuit, Gate, InitBasis

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdderSpec:
    n_bits: int

    def __post_init__(self):
        if self.n_bits < 1:
            raise ValueError(f"Adder width must be at least 1, got {self.n_bits}")

    @property
    def n_data(self) -> int:
        return 2 * self.n_bits + 1

    def carry_in(self) -> int:
        return 0

    def a(self, i: int) -> int:
        return 1 + i

    def b(self, i: int) -> int:
        return 1 + self.n_bits + i

    def carry(self, i: int) -> int:
        """Running carry wire for bit i: c0 first, then the previous a wire."""
        return self.carry_in() if i == 0 else self.a(i - 1)


def gen_adder_like(spec: AdderSpec) -> Circuit:
    """Qubits ordered (c0, a0..a_{N-1}, b0..b_{N-1}); 4N CNOTs, all inputs |0>."""
    n = spec.n_bits
    body: List[Gate] = []
    for i in range(n):
        body.append(Gate.cnot(spec.a(i), spec.b(i)))
        body.append(Gate.cnot(spec.a(i), spec.carry(i)))
    for i in reversed(range(n)):
        body.append(Gate.cnot(spec.a(i), spec.carry(i)))
        body.append(Gate.cnot(spec.carry(i), spec.b(i)))

    logger.debug(f"Generated adder-like circuit N={n}: {spec.n_data} qubits, {len(body)} CNOTs")
    return Circuit(n_data=spec.n_data, data_inits=(InitBasis.ZERO,) * spec.n_data, body=tuple(body))


def adder_like(n_bits: int) -> Circuit:
    return gen_adder_like(AdderSpec(n_bits))


def family_size_of(c: Circuit) -> int:
    """Operand width N of a generated circuit (n_data = 2N + 1)."""
    if c.n_data < 3 or c.n_data % 2 == 0:
        raise ValueError(f"{c.n_data} data qubits is not an adder-like size")
    return (c.n_data - 1) // 2
