"""
Full stabilizer tableau simulator (destabilizers + stabilizers with signs).

Follows the CHP layout: rows 0..n-1 are destabilizers, rows n..2n-1 are
stabilizers, each row is (x bits, z bits, sign bit). Used to compute the
noiseless reference state inside the brute-force oracle for
Pauli-frame propagation.
"""

from typing import Tuple

import numpy as np


def pauli_phase_exponent(x1, z1, x2, z2) -> np.ndarray:
    """Exponent of i picked up when multiplying Pauli rows (per qubit, summed by caller)."""
    x1 = x1.astype(np.int64)
    z1 = z1.astype(np.int64)
    x2 = x2.astype(np.int64)
    z2 = z2.astype(np.int64)
    return np.where(
        (x1 == 1) & (z1 == 1), z2 - x2,
        np.where(
            (x1 == 1) & (z1 == 0), z2 * (2 * x2 - 1),
            np.where((x1 == 0) & (z1 == 1), x2 * (1 - 2 * z2), 0),
        ),
    )


def symplectic_products(rows_x: np.ndarray, rows_z: np.ndarray, xs: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """1 where a row anticommutes with the Pauli (xs, zs), else 0."""
    rows_x = rows_x.astype(np.int64)
    rows_z = rows_z.astype(np.int64)
    return ((rows_x @ zs.astype(np.int64) + rows_z @ xs.astype(np.int64)) % 2).astype(np.uint8)


def multiply_rows(x1, z1, r1: int, x2, z2, r2: int) -> Tuple[np.ndarray, np.ndarray, int]:
    """Product of two commuting signed Pauli rows; returns (x, z, sign bit)."""
    total = 2 * r1 + 2 * r2 + int(pauli_phase_exponent(x1, z1, x2, z2).sum())
    return x1 ^ x2, z1 ^ z2, (total % 4) // 2


class Tableau:
    """CHP tableau over `n` qubits, initialised to |0...0>."""

    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        self.x[:n] = np.eye(n, dtype=np.uint8)
        self.z[n:] = np.eye(n, dtype=np.uint8)

    def h(self, q: int) -> None:
        self.r ^= self.x[:, q] & self.z[:, q]
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def cnot(self, control: int, target: int) -> None:
        xc, zc = self.x[:, control], self.z[:, control]
        xt, zt = self.x[:, target], self.z[:, target]
        self.r ^= xc & zt & (xt ^ zc ^ 1)
        self.x[:, target] ^= xc
        self.z[:, control] ^= zt

    def pauli(self, q: int, label: str) -> None:
        """Apply a single-qubit Pauli X, Y or Z (I is a no-op)."""
        if label == 'X':
            self.r ^= self.z[:, q]
        elif label == 'Z':
            self.r ^= self.x[:, q]
        elif label == 'Y':
            self.r ^= self.x[:, q] ^ self.z[:, q]
        elif label != 'I':
            raise ValueError(f"Unknown Pauli {label!r}")

    def stabilizers(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.n
        return self.x[n:].copy(), self.z[n:].copy(), self.r[n:].copy()

    def expectation(self, xs: np.ndarray, zs: np.ndarray, sign: int = 0) -> int:
        """Deterministic outcome (+1/-1) of measuring a signed Pauli, or 0 if random.

        The observable is rebuilt as a product of stabilizers selected by
        anticommutation with the matching destabilizers.
        """
        n = self.n
        xs = np.asarray(xs, dtype=np.uint8)
        zs = np.asarray(zs, dtype=np.uint8)
        stab_anti = symplectic_products(self.x[n:], self.z[n:], xs, zs)
        if stab_anti.any():
            return 0

        acc_x = np.zeros(n, dtype=np.uint8)
        acc_z = np.zeros(n, dtype=np.uint8)
        acc_r = 0
        destab_anti = symplectic_products(self.x[:n], self.z[:n], xs, zs)
        for i in np.flatnonzero(destab_anti):
            acc_x, acc_z, acc_r = multiply_rows(acc_x, acc_z, acc_r, self.x[n + i], self.z[n + i], int(self.r[n + i]))

        if not (np.array_equal(acc_x, xs) and np.array_equal(acc_z, zs)):
            raise RuntimeError("Commuting observable is not in the stabilizer group")
        return 1 if acc_r == sign else -1
