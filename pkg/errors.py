"""
Exceptions raised across the flag compiler and simulator.
"""

from typing import List


class MedusaError(Exception):
    """Base class for all toolchain errors."""


class CircuitSyntaxError(MedusaError, ValueError):
    """A circuit text line could not be parsed."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class CircuitValidationError(MedusaError, ValueError):
    """A circuit violates one or more structural invariants."""

    def __init__(self, violations: List, line_no: int = 0):
        self.violations = list(violations)
        self.line_no = line_no
        detail = ", ".join(str(v) for v in self.violations)
        prefix = f"line {line_no}: " if line_no else ""
        super().__init__(f"{prefix}invalid circuit: {detail}")


class FaultLocationError(MedusaError, ValueError):
    """A fault event does not point at a CNOT of the circuit."""


class InputMismatchError(MedusaError, ValueError):
    """An input string does not match the circuit's data qubits."""


class OracleSizeError(MedusaError, ValueError):
    """The brute-force oracle was asked to simulate too many qubits."""


class BodyMismatchError(MedusaError, ValueError):
    """A flagged circuit was not compiled from the given flagless circuit."""


class InfeasibleDistanceError(MedusaError):
    """No surface-code distance reaches the requested flag error rate."""

    def __init__(self, p_ncs: float, p_f_target: float, reason: str):
        self.p_ncs = p_ncs
        self.p_f_target = p_f_target
        self.reason = reason
        super().__init__(f"infeasible: p_ncs={p_ncs}, p_f_target={p_f_target}: {reason}")
