"""
Flag Fault-Tolerance Tuner

Searches the number of flags f and the flag error multiplier m that bring a
circuit's (post-selected) failure rate within epsilon of a target.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

from benchgen import adder_like
from circuit import Circuit
from flagger import FlagBudget, enumerate_candidates, insert_flags, rank_candidates
from montecarlo import NoiseModel, SimConfig, estimate

logger = logging.getLogger(__name__)

Evaluator = Callable[[int, float], Tuple[float, float]]


@dataclass(frozen=True)
class TuneRequest:
    fr_target: float
    f_max: int
    p_ncs: float
    sim: SimConfig = field(default_factory=SimConfig)
    epsilon: float = 0.0005
    m_resolution: int = 128
    rate: str = 'psfr'
    max_shots_per_input: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.fr_target <= 1:
            raise ValueError(f"fr_target must lie in [0, 1], got {self.fr_target}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.f_max < 1:
            raise ValueError("f_max must be at least 1")
        if self.m_resolution < 2:
            raise ValueError("m_resolution must be at least 2")
        if self.rate not in ('psfr', 'fr'):
            raise ValueError(f"rate must be 'psfr' or 'fr', got {self.rate!r}")

    @property
    def depth(self) -> int:
        return math.ceil(math.log2(self.m_resolution))

    @property
    def shots_cap(self) -> int:
        if self.max_shots_per_input is not None:
            return self.max_shots_per_input
        return 16 * self.sim.shots_per_input


@dataclass(frozen=True)
class TracePoint:
    f: int
    m: float
    fr: float
    se: float
    a: float
    b: float


@dataclass
class TuneResult:
    m: float
    f: int
    achieved_fr: float
    achieved_se: float
    converged: bool
    evaluations: int
    trace: List[TracePoint]
    fr_target: float
    epsilon: float
    lower_bound: Optional[float] = None

    def to_json(self) -> Dict:
        return {
            'schema_version': 1,
            'converged': self.converged,
            'f': self.f,
            'm': self.m,
            'achieved_fr': self.achieved_fr,
            'achieved_se': self.achieved_se,
            'fr_target': self.fr_target,
            'epsilon': self.epsilon,
            'evaluations': self.evaluations,
            'lower_bound': self.lower_bound,
            'trace': [asdict(p) for p in self.trace],
        }


def simulation_evaluator(c: Circuit, req: TuneRequest, size: Optional[int] = None) -> Evaluator:
    """Evaluate (f, m) by compiling the top-f flags and running the estimator.

    Shots per input are doubled (up to the cap) while the standard error
    exceeds epsilon / 2.
    """
    ranked = rank_candidates(enumerate_candidates(c))
    circuits: Dict[int, Circuit] = {}

    def evaluate(f: int, m: float) -> Tuple[float, float]:
        if f not in circuits:
            circuits[f] = insert_flags(c, ranked, FlagBudget.fixed(f))
        noise = NoiseModel(req.p_ncs, m)
        shots = req.sim.shots_per_input
        while True:
            report = estimate(c, circuits[f], noise, replace(req.sim, shots_per_input=shots), size)
            if req.rate == 'psfr':
                rate, se = report.psfr, report.se_psfr
            else:
                rate, se = report.fr, report.se_fr
            if se <= req.epsilon / 2 or shots * 2 > req.shots_cap:
                return rate, se
            logger.info(f"SE {se:.2g} above epsilon/2 at f={f}, m={m:g}; doubling shots to {shots * 2}")
            shots *= 2

    return evaluate


def tune(c: Circuit, req: TuneRequest, evaluate: Optional[Evaluator] = None,
         size: Optional[int] = None) -> TuneResult:
    """Bisection over m for f = 1..min(f_max, n) flags.

    The rate is non-decreasing in m, so a rate above target + epsilon
    moves the upper end down and a rate below target - epsilon moves the
    lower end up.
    """
    if c.flags:
        raise ValueError("tune expects a flagless circuit")
    available = len({cand.data_qubit for cand in enumerate_candidates(c)})
    f_limit = min(req.f_max, c.n_data, available)
    if evaluate is None:
        evaluate = simulation_evaluator(c, req, size)

    target, eps = req.fr_target, req.epsilon
    trace: List[TracePoint] = []
    best: Optional[TracePoint] = None
    lower_bound: Optional[float] = None

    def record(point: TracePoint) -> bool:
        nonlocal best
        trace.append(point)
        logger.info(f"Tuner f={point.f} m={point.m:.6f} rate={point.fr:.6f} (target {target:.6f})")
        if best is None or abs(point.fr - target) < abs(best.fr - target):
            best = point
        return abs(point.fr - target) <= eps

    def result(point: TracePoint, converged: bool) -> TuneResult:
        return TuneResult(point.m, point.f, point.fr, point.se, converged, len(trace), trace,
                          target, eps, lower_bound)

    if f_limit == 0:
        # nothing to flag: the unflagged rate is the only reachable one
        rate, se = evaluate(0, 0.0)
        point = TracePoint(0, 0.0, rate, se, 0.0, 1.0)
        lower_bound = rate
        if record(point):
            return result(point, True)
        logger.warning(f"No flag candidates; unflagged rate {rate:.6f} misses {target:.6f} +/- {eps:g}")
        return result(point, False)

    for f in range(1, f_limit + 1):
        a, b = 0.0, 1.0
        went_below = False
        for _ in range(req.depth):
            m = (a + b) / 2
            rate, se = evaluate(f, m)
            point = TracePoint(f, m, rate, se, a, b)
            if record(point):
                return result(point, True)
            if rate > target + eps:
                b = m
            else:
                a = m
                went_below = True

        if not went_below:
            rate, se = evaluate(f, 0.0)
            point = TracePoint(f, 0.0, rate, se, a, b)
            lower_bound = rate if lower_bound is None else min(lower_bound, rate)
            if record(point):
                return result(point, True)

    logger.warning(f"Tuner did not reach {target:.6f} +/- {eps:g}; best rate {best.fr:.6f} at f={best.f}, m={best.m:g}")
    return result(best, False)


def target_from_smaller(n: int, p_ncs: float, cfg: SimConfig,
                        family: Callable[[int], Circuit] = adder_like) -> Tuple[float, float]:
    """Flagless FR (and its standard error) of the size n-1 family member."""
    if n < 2:
        raise ValueError(f"Family size must be at least 2, got {n}")
    smaller = family(n - 1)
    report = estimate(smaller, smaller, NoiseModel(p_ncs, 1.0), cfg, size=n - 1)
    logger.info(f"Target from size {n - 1}: fr={report.fr:.6f} +/- {report.se_fr:.2g}")
    return report.fr, report.se_fr
