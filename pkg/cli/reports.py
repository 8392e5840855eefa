"""
Report emission for the reversibility toolkit.

JSON reports are canonical (sorted keys, rounded floats) and CSV traces are
written with the csv module, so identical runs give byte-identical files.
"""

import csv
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from services.chains import GridScale, SteeredRun
from services.collapse import OutcomeLabel
from services.qstate import ProjectiveState
from services.recurrence import RecurrenceCertificate
from utils.config import save_config
from utils.logger import setup_logger
from utils.serialization import clean_float, dumps_canonical, to_jsonable


logger = setup_logger(__name__)


class ReportWriter:
    """Writes report files into one output directory."""

    def __init__(self, directory: str, formats: Sequence[str] = ('json', 'csv')):
        self.directory = Path(directory)
        self.formats = set(formats)
        self.written: List[Path] = []

    def _path(self, name: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        return self.directory / name

    def write_json(self, name: str, payload: Any) -> Optional[Path]:
        if 'json' not in self.formats:
            return None
        path = self._path(name)
        path.write_text(dumps_canonical(payload), encoding='utf-8')
        self.written.append(path)
        logger.debug(f"Wrote {path}")
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Optional[Path]:
        if 'csv' not in self.formats:
            return None
        path = self._path(name)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(value) for value in row])
        self.written.append(path)
        logger.debug(f"Wrote {path}")
        return path

    def write_scenario(self, config: Dict[str, Any]) -> Optional[Path]:
        """Resolved scenario (defaults and seed overrides applied) as resolved_scenario.json."""
        if 'json' not in self.formats:
            return None
        path = self._path('resolved_scenario.json')
        if not save_config(to_jsonable(config), str(path)):
            logger.warning(f"Could not write {path}")
            return None
        self.written.append(path)
        return path


def _cell(value: Any) -> Any:
    if isinstance(value, bool) or value is None:
        return '' if value is None else str(value).lower()
    if isinstance(value, float):
        cleaned = clean_float(value)
        return cleaned if isinstance(cleaned, str) else repr(cleaned)
    return value


def state_header(dim: int) -> List[str]:
    header = ['step']
    for k in range(dim):
        header += [f're_{k}', f'im_{k}']
    return header + ['label']


def state_rows(states: Sequence[ProjectiveState], labels: Sequence[OutcomeLabel]) -> List[list]:
    """One row per visited state; the label is the outcome applied at that step (blank for the last state)."""
    rows = []
    for n, state in enumerate(states):
        row: list = [n]
        for z in state.amplitudes:
            row += [float(z.real), float(z.imag)]
        row.append(labels[n] if n < len(labels) else None)
        rows.append(row)
    return rows


CHAIN_HEADER = ['step', 'node', 'jump_cost', 'plan_delta', 'window_start', 'window_end', 'label']


def chain_rows(run: SteeredRun, path: Sequence[int]) -> List[list]:
    """One row per jump of a steered chain."""
    rows = []
    for k, plan in enumerate(run.plans, start=1):
        rows.append([
            k,
            path[k],
            run.chain.jump_costs[k - 1],
            plan.delta,
            plan.window[0],
            plan.window[1],
            run.labels[k - 1],
        ])
    return rows


CERTIFICATE_HEADER = ['scale', 'loop_length', 'loop_cost', 'method', 'nested']


def certificate_rows(cert: RecurrenceCertificate) -> List[list]:
    rows = []
    for eps, loop in zip(cert.scales, cert.loops):
        if loop is None:
            rows.append([eps, None, None, 'failed', cert.nested])
        else:
            rows.append([eps, loop.chain.length, loop.chain.total, loop.method, cert.nested])
    return rows


GRID_HEADER = ['seed', 'scale', 'radius', 'center_index', 'revisit_index', 'loop_cost', 'nests_previous']


def grid_rows(seed: int, results: Sequence[GridScale]) -> List[list]:
    return [
        [seed, r.scale, r.radius, r.center_index, r.revisit_index, r.loop_cost, r.nests_previous]
        for r in results
    ]
