"""
Run configuration import (JSON -> validated RunConfig) and report export (CSV + JSON summary).

Report files are byte-for-byte reproducible: fixed float formatting, sorted JSON keys,
'\n' line endings and no wall-clock values.
"""
import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

from config import (
    DMSS_CONFIG, EVALUATION_CONFIG, KEY_SUGGESTION_CONFIG, OUTPUT_DIR, POISSON_CONFIG, REPORT_CONFIG,
    SCHEDULE_CONFIG, SOLVER_CONFIG, APP_VERSION
)
from utils.exceptions import ConfigError, ReportError

try:
    from rapidfuzz import fuzz
    RAPIDFUZZ_AVAILABLE = True
except ImportError:
    RAPIDFUZZ_AVAILABLE = False

logger = logging.getLogger(__name__)

ALGORITHMS = ('hadamard_lagrange', 'kyriienko_inspired')
STRUCTURES = ('extended', 'simplified')
RIGHT_HALF_MODES = ('mirror', 'solve', 'none')


@dataclass(frozen=True)
class RunConfig:
    """One experiment: a problem, a solver, and the seeds to run it with."""
    name: str
    problem: str = 'dmss'
    algorithm: str = 'hadamard_lagrange'
    structure: str = 'simplified'
    node_kind: int = 1
    n_nodes: Optional[int] = None
    n_qubits: int = 5
    n_layers: int = 2
    schedule: Optional[str] = None
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    max_iters: int = 2000
    eps_loss: float = SOLVER_CONFIG['eps_loss']
    eps_grad: float = SOLVER_CONFIG['eps_grad']
    eta: Optional[Tuple[float, float, float]] = None
    learning_rate: float = SOLVER_CONFIG['learning_rate']
    distance: str = SOLVER_CONFIG['distance']
    bc_mode: str = 'floating'
    physical_interval: Optional[Tuple[float, float]] = None
    evaluation_interval: Optional[Tuple[float, float]] = None
    encoded_interval: Tuple[float, float] = DMSS_CONFIG['encoded_interval']
    mass: float = DMSS_CONFIG['mass']
    damping: float = DMSS_CONFIG['damping']
    stiffness: float = DMSS_CONFIG['stiffness']
    u0: float = DMSS_CONFIG['u0']
    du0: float = DMSS_CONFIG['du0']
    n_src: int = POISSON_CONFIG['n_src']
    bc_kind: str = 'dirichlet'
    half: str = 'left'
    right_half: str = 'mirror'
    amplitude_scale: Optional[float] = None
    evaluation_points: int = EVALUATION_CONFIG['n_points']
    part2_sweeps: int = SCHEDULE_CONFIG['part2_sweeps']
    stage_iters: int = SCHEDULE_CONFIG['stage_iters']
    window_iters: int = SCHEDULE_CONFIG['window_iters']
    reset_moments: bool = SCHEDULE_CONFIG['reset_moments']
    lr_thresholds: Tuple[Tuple[float, float], ...] = SCHEDULE_CONFIG['lr_thresholds']
    n_shift_circuits: int = 1
    output_dir: str = OUTPUT_DIR

    @property
    def is_lagrange(self) -> bool:
        return self.algorithm == 'hadamard_lagrange'

    @property
    def resolved_schedule(self) -> str:
        if self.schedule is not None:
            return self.schedule
        return 'two_part' if self.is_lagrange else 'fixed'

    @property
    def resolved_eta(self) -> Tuple[float, float, float]:
        if self.eta is not None:
            return self.eta
        if not self.is_lagrange:
            return DMSS_CONFIG['ki_eta']
        return POISSON_CONFIG['eta'] if self.problem == 'poisson' else DMSS_CONFIG['hl_eta']

    @property
    def resolved_n_nodes(self) -> int:
        if self.n_nodes is not None:
            return self.n_nodes
        if self.problem == 'poisson':
            return POISSON_CONFIG['n_nodes']
        return 7 if self.is_lagrange else 12

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def replace_seeds(self, seeds) -> 'RunConfig':
        return _build(dict(self.to_dict(), seeds=list(seeds)))


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def suggest_key(key: str, candidates=CONFIG_KEYS) -> Optional[str]:
    """Closest valid key above the similarity threshold, or None."""
    best, best_score = None, 0.0
    for candidate in candidates:
        if RAPIDFUZZ_AVAILABLE:
            score = fuzz.ratio(key.lower(), candidate) / 100.0
        else:
            # Fallback: case-insensitive exact match only
            score = 1.0 if key.lower() == candidate else 0.0
        if score > best_score:
            best, best_score = candidate, score
    return best if best_score >= KEY_SUGGESTION_CONFIG['threshold'] else None


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _require(condition: bool, key: str, message: str):
    if not condition:
        raise ConfigError(key, message)


def _number(data: dict, key: str, integer: bool = False):
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _pair(data: dict, key: str) -> Optional[Tuple[float, float]]:
    value = data[key]
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(key, f"expected [low, high], got {value!r}")
    low, high = (_number({key: v}, key) for v in value)
    _require(high > low, key, f"interval [{low}, {high}] is empty")
    return low, high


def _choice(data: dict, key: str, options) -> Any:
    value = data[key]
    if value not in options:
        raise ConfigError(key, f"expected one of {list(options)}, got {value!r}")
    return value


def _build(data: Dict[str, Any]) -> RunConfig:
    values = {f.name: f.default for f in fields(RunConfig) if f.name != 'name'}
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key", suggest_key(unknown[0]))
    if 'name' not in data:
        raise ConfigError('name', "missing required key")
    values.update(data)

    name = values['name'] = data['name']
    _require(isinstance(name, str) and name.strip() != '' and os.sep not in name, 'name',
             f"expected a non-empty file-name-safe string, got {name!r}")
    _choice(values, 'problem', ('dmss', 'poisson'))
    _choice(values, 'algorithm', ALGORITHMS)
    _choice(values, 'structure', STRUCTURES)
    _choice(values, 'node_kind', (1, 2))
    values['node_kind'] = int(values['node_kind'])
    if values['schedule'] is not None:
        _choice(values, 'schedule', ('fixed', 'two_part'))
    _choice(values, 'distance', ('mse', 'mae'))
    _choice(values, 'bc_mode', ('floating', 'loss'))
    _choice(values, 'bc_kind', ('periodic', 'dirichlet', 'neumann'))
    _choice(values, 'half', ('left', 'right'))
    _choice(values, 'right_half', RIGHT_HALF_MODES)

    for key in ('n_qubits', 'n_layers', 'max_iters', 'n_src', 'evaluation_points', 'part2_sweeps',
                'n_shift_circuits', 'stage_iters', 'window_iters'):
        values[key] = _number(values, key, integer=True)
    if values['n_nodes'] is not None:
        values['n_nodes'] = _number(values, 'n_nodes', integer=True)
    for key in ('eps_loss', 'eps_grad', 'learning_rate', 'mass', 'damping', 'stiffness', 'u0', 'du0'):
        values[key] = _number(values, key)
    if values['amplitude_scale'] is not None:
        values['amplitude_scale'] = _number(values, 'amplitude_scale')
        _require(values['amplitude_scale'] > 0, 'amplitude_scale', "must be positive")

    _require(values['max_iters'] >= 1, 'max_iters', "must be >= 1")
    _require(values['n_qubits'] >= 1, 'n_qubits', "must be >= 1")
    _require(values['n_layers'] >= 1, 'n_layers', "must be >= 1")
    _require(values['evaluation_points'] >= 2, 'evaluation_points', "must be >= 2")
    _require(values['part2_sweeps'] >= 0, 'part2_sweeps', "must be >= 0")
    _require(values['stage_iters'] >= 0, 'stage_iters', "must be >= 0")
    _require(values['window_iters'] >= 0, 'window_iters', "must be >= 0")
    _require(isinstance(values['reset_moments'], bool), 'reset_moments',
             f"expected true or false, got {values['reset_moments']!r}")
    _require(values['n_shift_circuits'] >= 0, 'n_shift_circuits', "must be >= 0")
    _require(values['n_src'] >= 1, 'n_src', "must be >= 1")
    _require(values['eps_loss'] >= 0, 'eps_loss', "must be non-negative")
    _require(values['eps_grad'] >= 0, 'eps_grad', "must be non-negative")
    _require(values['learning_rate'] > 0, 'learning_rate', "must be positive")
    _require(values['mass'] > 0, 'mass', "must be positive")

    seeds = values['seeds']
    _require(isinstance(seeds, (list, tuple)) and len(seeds) > 0, 'seeds', "expected a non-empty list")
    values['seeds'] = tuple(_number({'seeds': s}, 'seeds', integer=True) for s in seeds)
    _require(all(s >= 0 for s in values['seeds']), 'seeds', "seeds must be non-negative")

    if values['eta'] is not None:
        eta = values['eta']
        _require(isinstance(eta, (list, tuple)) and len(eta) == 3, 'eta', "expected three weights")
        eta = tuple(_number({'eta': e}, 'eta') for e in eta)
        _require(all(e >= 0 for e in eta), 'eta', f"weights must be non-negative, got {list(eta)}")
        values['eta'] = eta

    for key in ('physical_interval', 'evaluation_interval', 'encoded_interval'):
        values[key] = _pair(values, key)
    _require(values['encoded_interval'] is not None, 'encoded_interval', "is required")
    low, high = values['encoded_interval']
    _require(0.0 <= low and high < 1.0, 'encoded_interval', "must lie in [0, 1)")

    thresholds = values['lr_thresholds']
    _require(isinstance(thresholds, (list, tuple)), 'lr_thresholds', "expected [[loss, lr], ...]")
    parsed = []
    for entry in thresholds:
        _require(isinstance(entry, (list, tuple)) and len(entry) == 2, 'lr_thresholds',
                 f"expected [loss, lr], got {entry!r}")
        loss, lr = (_number({'lr_thresholds': v}, 'lr_thresholds') for v in entry)
        _require(lr > 0, 'lr_thresholds', f"learning rate must be positive, got {lr}")
        parsed.append((loss, lr))
    values['lr_thresholds'] = tuple(parsed)

    _require(isinstance(values['output_dir'], str) and values['output_dir'] != '', 'output_dir',
             "expected a directory path")

    config = RunConfig(**values)
    _check_combinations(config)
    return config


def _check_combinations(config: RunConfig):
    if not config.is_lagrange:
        _require(config.problem == 'dmss', 'problem', "the kyriienko_inspired solver runs the DMSS only")
        _require(config.resolved_schedule == 'fixed', 'schedule',
                 "the kyriienko_inspired solver uses the fixed schedule")
    n_nodes = config.resolved_n_nodes
    _require(n_nodes >= 2, 'n_nodes', "must be >= 2")
    if config.is_lagrange and config.resolved_schedule == 'two_part':
        _require(n_nodes >= SCHEDULE_CONFIG['initial_active'], 'n_nodes',
                 f"the two-part schedule needs at least {SCHEDULE_CONFIG['initial_active']} nodes")
    if config.problem == 'dmss':
        _require(config.damping ** 2 < 4 * config.mass * config.stiffness, 'damping',
                 "the mass-spring system must be underdamped (b^2 < 4mk)")

def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """Validate a parsed configuration; every error names its key."""
    if not isinstance(data, dict):
        raise ConfigError('<root>', f"expected a JSON object, got {type(data).__name__}")
    return _build(dict(data))


def load_config(filepath: str) -> RunConfig:
    """Read and validate a JSON run configuration."""
    try:
        with open(filepath, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError('<file>', f"cannot read {filepath}: {e.strerror or e}")
    except json.JSONDecodeError as e:
        raise ConfigError('<file>', f"{filepath} is not valid JSON: {e}")
    config = config_from_dict(data)
    logger.info(f"Loaded configuration '{config.name}' from {filepath}")
    return config


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class SeedResult:
    """Outcome of one seed: traces, and the evaluation table unless the run diverged."""
    seed: int
    status: str
    trace: Any
    table: Any = None
    right_trace: Any = None

    @property
    def theta(self) -> List[float]:
        return [float(t) for t in self.trace.theta] if self.trace.theta is not None else []


@dataclass
class RunReport:
    config: RunConfig
    results: List[SeedResult] = field(default_factory=list)
    budget: Dict[str, Any] = field(default_factory=dict)


def _fmt(value) -> str:
    if value is None:
        return ''
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    return format(float(value), REPORT_CONFIG['float_format'])


def _clean(value):
    """JSON-safe values with fixed float formatting."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    return float(format(float(value), REPORT_CONFIG['float_format']))


class ImportExport:
    """Handles config import and report export."""

    @staticmethod
    def _write_csv(path: str, header, rows):
        try:
            with open(path, 'w', encoding='utf-8', newline='') as f:
                writer = csv.writer(f, lineterminator='\n')
                writer.writerow(header)
                writer.writerows(rows)
        except OSError as e:
            raise ReportError(path, e.strerror or str(e))

    @staticmethod
    def _trace_rows(trace):
        for r in trace.records:
            yield (r.iteration, _fmt(r.loss_total), _fmt(r.loss_de), _fmt(r.loss_cs), _fmt(r.loss_reg),
                   _fmt(r.grad_maxnorm), _fmt(r.learning_rate), ';'.join(str(i) for i in r.active_nodes),
                   r.circuits_cum, r.gates_cum, r.built_gates_cum)

    @staticmethod
    def _seed_summary(result: SeedResult) -> Dict[str, Any]:
        trace = result.trace
        latest = trace.records[-1] if trace.records else None
        summary = {
            'seed': result.seed,
            'status': result.status,
            'iterations': trace.iterations,
            'part1_iterations': trace.part1_iterations,
            'part1_loss': trace.part1_loss,
            'loss_total': latest.loss_total if latest else None,
            'loss_de': latest.loss_de if latest else None,
            'loss_cs': latest.loss_cs if latest else None,
            'loss_reg': latest.loss_reg if latest else None,
            'circuits_cum': latest.circuits_cum if latest else 0,
            'gates_cum': latest.gates_cum if latest else 0,
            'built_gates_cum': latest.built_gates_cum if latest else 0,
            'theta': result.theta,
            'shift': trace.shift,
            'events': [{'iteration': e.iteration, 'kind': e.kind, 'detail': e.detail} for e in trace.events],
            'de_loss_eval': result.table.de_loss_total if result.table is not None else None,
            'bc_loss_eval': result.table.bc_loss if result.table is not None else None,
        }
        if result.right_trace is not None:
            summary['right_half'] = {
                'status': result.right_trace.status,
                'iterations': result.right_trace.iterations,
                'theta': [float(t) for t in result.right_trace.theta],
                'shift': result.right_trace.shift,
            }
        return summary

    @staticmethod
    def emit_report(report: RunReport, directory: str) -> List[str]:
        """Write every report file of ``report`` into ``directory``; returns the paths written."""
        try:
            os.makedirs(directory, exist_ok=True)
        except OSError as e:
            raise ReportError(directory, e.strerror or str(e))
        name = report.config.name
        written = []

        aggregate = []
        seeds = []
        for result in report.results:
            stem = os.path.join(directory, f"{name}_seed{result.seed}")
            if result.table is not None:
                path = f"{stem}_evaluation.csv"
                ImportExport._write_csv(path, REPORT_CONFIG['evaluation_header'],
                                        ([_fmt(v) for v in row] for row in result.table.rows()))
                written.append(path)
            path = f"{stem}_trace.csv"
            ImportExport._write_csv(path, REPORT_CONFIG['trace_header'], ImportExport._trace_rows(result.trace))
            written.append(path)
            if result.right_trace is not None:
                path = f"{stem}_right_trace.csv"
                ImportExport._write_csv(path, REPORT_CONFIG['trace_header'],
                                        ImportExport._trace_rows(result.right_trace))
                written.append(path)

            summary = ImportExport._seed_summary(result)
            seeds.append(summary)
            aggregate.append((result.seed, result.status, summary['iterations'], _fmt(summary['part1_iterations']),
                              _fmt(summary['part1_loss']), _fmt(summary['loss_total']),
                              _fmt(summary['de_loss_eval']), _fmt(summary['bc_loss_eval']),
                              summary['circuits_cum'], summary['gates_cum']))

        path = os.path.join(directory, f"{name}_aggregate.csv")
        ImportExport._write_csv(path, REPORT_CONFIG['aggregate_header'], aggregate)
        written.append(path)

        data = {
            'version': APP_VERSION,
            'config': report.config.to_dict(),
            'seeds': seeds,
            'budget': report.budget,
        }
        path = os.path.join(directory, f"{name}_summary.json")
        try:
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                json.dump(_clean(data), f, indent=2, sort_keys=True, ensure_ascii=False)
                f.write('\n')
        except OSError as e:
            raise ReportError(path, e.strerror or str(e))
        written.append(path)
        logger.info(f"Wrote {len(written)} report files to {directory}")
        return written


emit_report = ImportExport.emit_report
