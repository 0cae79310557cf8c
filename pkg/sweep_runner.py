"""
Batch Sweep Runner

Runs the (N, p_ncs, m) benchmark grid with progress tracking and
resumption: every finished grid point is saved to a progress file so an
interrupted sweep picks up where it stopped.
"""

import json
import logging
import time
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from benchgen import adder_like
from flagger import FlagBudget, compile_flagged
from montecarlo import NoiseModel, SimConfig, estimate, fr_delta
from resources import RESOURCE_COLUMNS, resource_table
from tuner import TuneRequest, target_from_smaller, tune

logger = logging.getLogger(__name__)

TUNE_COLUMNS = RESOURCE_COLUMNS[:3] + ['flags', 'converged', 'achieved_fr', 'fr_target'] + RESOURCE_COLUMNS[3:]


class SweepRunner:
    """Processes sweep grid points one at a time with resumable progress."""

    def __init__(self, sizes: Sequence[int], p_grid: Sequence[float], m_grid: Sequence[float],
                 budget: FlagBudget, sim: SimConfig, progress_file: Optional[Path] = None,
                 tune_mode: bool = False, epsilon: float = 0.0005, m_resolution: int = 128):
        self.sizes = list(sizes)
        self.p_grid = list(p_grid)
        self.m_grid = list(m_grid)
        self.budget = budget
        self.sim = sim
        self.progress_file = Path(progress_file) if progress_file else None
        self.tune_mode = tune_mode
        self.epsilon = epsilon
        self.m_resolution = m_resolution
        self.progress = self.load_progress()

    def load_progress(self) -> Dict:
        """Load sweep progress from file."""
        if self.progress_file and self.progress_file.exists():
            try:
                with open(self.progress_file, 'r', encoding='utf-8') as f:
                    progress = json.load(f)
                if progress.get('signature') == self.signature():
                    logger.info(f"Resuming sweep: {len(progress['completed'])} grid points already done")
                    return progress
                logger.warning("Progress file belongs to a different sweep; starting over")
            except Exception as e:
                logger.warning(f"Could not load progress file: {e}")

        return {
            'signature': self.signature(),
            'completed': {},
            'start_time': datetime.now().isoformat(),
            'last_update': None,
        }

    def save_progress(self) -> None:
        """Save current progress to file."""
        if not self.progress_file:
            return
        self.progress['last_update'] = datetime.now().isoformat()
        try:
            with open(self.progress_file, 'w', encoding='utf-8') as f:
                json.dump(self.progress, f, indent=2, ensure_ascii=False)
        except Exception as e:
            logger.error(f"Could not save progress: {e}")

    def signature(self) -> Dict:
        return {
            'sizes': self.sizes,
            'p_grid': self.p_grid,
            'm_grid': self.m_grid,
            'budget': str(self.budget),
            'shots_per_input': self.sim.shots_per_input,
            'max_inputs': self.sim.max_inputs,
            'seed': self.sim.seed,
            'subsample': self.sim.stabilizer_subsample_r,
            'tune': self.tune_mode,
            'epsilon': self.epsilon,
        }

    def grid_points(self) -> List[Tuple[int, float]]:
        return [(n, p) for n in self.sizes for p in self.p_grid]

    @staticmethod
    def point_key(n: int, p: float) -> str:
        return f"N={n},p={p!r}"

    def process_point(self, n: int, p: float) -> List[Dict]:
        """Flagless and flagged runs for one (N, p_ncs) point."""
        flagless = adder_like(n)
        flagged = compile_flagged(flagless, self.budget, size=n)

        base = estimate(flagless, flagless, NoiseModel(p, 1.0), self.sim, size=n)
        flagless_row = base.to_csv_row()
        flagless_row['m'] = ''
        rows = [flagless_row]
        for m in self.m_grid:
            report = estimate(flagless, flagged, NoiseModel(p, m), self.sim, size=n)
            logger.info(f"N={n} p={p:g} m={m:g}: delta_fr={fr_delta(base, report):.6f}")
            rows.append(report.to_csv_row())
        return rows

    def process_tune_point(self, n: int, p: float) -> List[Dict]:
        """Tune N's flags to the flagless FR of size N-1 and price the result."""
        flagless = adder_like(n)
        target, _ = target_from_smaller(n, p, self.sim)
        f_max = self.budget.count(n)
        request = TuneRequest(fr_target=target, f_max=max(1, min(f_max, flagless.n_data)), p_ncs=p,
                              sim=self.sim, epsilon=self.epsilon, m_resolution=self.m_resolution)
        result = tune(flagless, request, size=n)

        (row,) = resource_table([{'n': n, 'n_data': flagless.n_data, 'n_flags': result.f, 'p_ncs': p, 'm': result.m}])
        row.update(flags=result.f, converged=result.converged, achieved_fr=result.achieved_fr, fr_target=target)
        return [row]

    def run(self) -> List[Dict]:
        """Process every pending grid point, then return all rows in grid order."""
        points = self.grid_points()
        completed = self.progress['completed']
        pending = [pt for pt in points if self.point_key(*pt) not in completed]
        logger.info(f"Total grid points: {len(points)}")
        logger.info(f"Completed: {len(points) - len(pending)}")
        logger.info(f"Pending: {len(pending)}")

        for i, (n, p) in enumerate(pending, 1):
            logger.info(f"Sweep progress: {i}/{len(pending)} - N={n}, p={p:g}")
            start_time = time.time()
            if self.tune_mode:
                rows = self.process_tune_point(n, p)
            else:
                rows = self.process_point(n, p)
            completed[self.point_key(n, p)] = rows
            self.save_progress()
            logger.info(f"Grid point done in {time.time() - start_time:.1f}s")

        return [row for pt in points for row in completed[self.point_key(*pt)]]
