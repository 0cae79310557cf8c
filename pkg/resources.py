"""
Surface-Code Resource Estimation

Maps a required flag error rate p_f = m * p_ncs to the smallest rotated
surface-code distance and the resulting physical qubit count. Totals are
lower bounds: routing and the error-corrected flag-data CNOTs are excluded.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional

from circuit import Circuit
from errors import InfeasibleDistanceError

logger = logging.getLogger(__name__)

PSEUDO_THRESHOLD = 0.0053
PREFACTOR = 0.08
SLOPE = 0.58
OFFSET = 0.27
MIN_DISTANCE = 3
MAX_DISTANCE = 999
RESOURCE_COLUMNS = ['n', 'p_ncs', 'm', 'd', 'total_qubits']


@dataclass(frozen=True)
class ResourceEstimate:
    distance: Optional[int]
    p_f_requested: Optional[float]
    p_f_achieved: Optional[float]
    qubits_per_flag: int
    n_data: int
    n_flags: int
    total_physical_qubits: int
    note: str = ''

    def to_json(self) -> Dict:
        return {'schema_version': 1, **asdict(self)}


def flag_error_rate(p_ncs: float, d: int) -> float:
    """Logical error rate of a distance-d flag: 0.08 * (p/0.0053)^(0.58 d - 0.27)."""
    if p_ncs <= 0:
        raise ValueError(f"p_ncs must be positive, got {p_ncs}")
    if d < 1:
        raise ValueError(f"distance must be at least 1, got {d}")
    return PREFACTOR * (p_ncs / PSEUDO_THRESHOLD) ** (SLOPE * d - OFFSET)


def qubits_per_flag(d: int) -> int:
    return 2 * d * d - 1


def required_distance(p_ncs: float, p_f_target: float) -> int:
    """Smallest odd d >= 3 whose flag error rate is at most the target."""
    if p_f_target <= 0:
        raise InfeasibleDistanceError(p_ncs, p_f_target, "a zero flag error rate needs unbounded distance")
    if flag_error_rate(p_ncs, MIN_DISTANCE) <= p_f_target:
        return MIN_DISTANCE
    if p_ncs >= PSEUDO_THRESHOLD:
        raise InfeasibleDistanceError(p_ncs, p_f_target,
                                      f"p_ncs at or above {PSEUDO_THRESHOLD}: distance does not lower p_f")
    for d in range(MIN_DISTANCE + 2, MAX_DISTANCE + 1, 2):
        if flag_error_rate(p_ncs, d) <= p_f_target:
            return d
    raise InfeasibleDistanceError(p_ncs, p_f_target, f"no distance up to {MAX_DISTANCE} suffices")


def estimate_from_counts(n_data: int, n_flags: int, p_ncs: float, m: float) -> ResourceEstimate:
    notes: List[str] = []
    if p_ncs == PSEUDO_THRESHOLD:
        notes.append(f"p_ncs at pseudo-threshold: p_f={PREFACTOR} for every distance")
    if n_flags == 0:
        notes.append("no flags: no surface-code patches needed")
        return ResourceEstimate(None, None, None, 0, n_data, 0, n_data, '; '.join(notes))

    p_f_target = m * p_ncs
    d = required_distance(p_ncs, p_f_target)
    per_flag = qubits_per_flag(d)
    notes.append("lower bound: excludes routing and error-corrected flag-data CNOTs")
    estimate = ResourceEstimate(
        distance=d,
        p_f_requested=p_f_target,
        p_f_achieved=flag_error_rate(p_ncs, d),
        qubits_per_flag=per_flag,
        n_data=n_data,
        n_flags=n_flags,
        total_physical_qubits=n_data + n_flags * per_flag,
        note='; '.join(notes),
    )
    logger.info(f"d={d} for p_f={p_f_target:.3g} at p_ncs={p_ncs:g}: {estimate.total_physical_qubits} qubits")
    return estimate


def estimate_total(c_flagged: Circuit, p_ncs: float, m: float) -> ResourceEstimate:
    """Physical qubits for the data plus one distance-d patch per flag."""
    if c_flagged.n_flags < 1:
        raise ValueError("estimate_total expects a circuit with at least one flag")
    return estimate_from_counts(c_flagged.n_data, c_flagged.n_flags, p_ncs, m)


def resource_row(n: int, p_ncs: float, m: float, estimate: Optional[ResourceEstimate]) -> Dict:
    """One (N, p_ncs, m, d, total_qubits) row; infeasible points have empty d and total."""
    if estimate is None:
        return {'n': n, 'p_ncs': p_ncs, 'm': m, 'd': '', 'total_qubits': ''}
    return {'n': n, 'p_ncs': p_ncs, 'm': m,
            'd': '' if estimate.distance is None else estimate.distance,
            'total_qubits': estimate.total_physical_qubits}


def resource_table(points: Iterable[Dict]) -> List[Dict]:
    """Rows for points given as dicts with n, n_data, n_flags, p_ncs, m."""
    rows = []
    for point in points:
        try:
            est = estimate_from_counts(point['n_data'], point['n_flags'], point['p_ncs'], point['m'])
        except InfeasibleDistanceError as e:
            logger.warning(f"{e}")
            est = None
        rows.append(resource_row(point['n'], point['p_ncs'], point['m'], est))
    return rows
