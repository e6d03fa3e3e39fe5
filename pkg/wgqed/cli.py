"""
Command-line runner. ``wgqed run`` simulates one manifest with the MPS engine, the SDW engine, both, or the reference
oracle; ``compare`` measures the distance between two result tables; ``benchmark`` times manifests; ``sweep`` runs a
cartesian grid of overrides. Manifests are flat ``key = value`` files and every key can also be given as a flag of the
same name (``--tau 1``), which takes precedence over the file.

Exit codes: 0 success, 2 invalid configuration, 3 file error, 4 comparison outside tolerance, 5 numerical failure.
"""
import argparse
import itertools
import re
import sys
from collections import OrderedDict
from enum import Enum
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .configuration import Config, ConfigParseError, ConfigSpecificationError, ConfigTypeError
from .logging import LogFormats, get_model_logger, init_root, log_to_file, timed
from .routines.analysis import ComparisonReport, GridMismatchError, compare_tables
from .routines.io.common import output_stem
from .routines.io.tables import read_table, write_emissions, write_metadata, write_table
from .routines.linalg import ContractionError, DegenerateMatrixError
from .routines.mps import DEFAULT_REL_TOL, run_mps
from .routines.oracles import OracleDomainError, reference_curve
from .routines.schemes import SchemeConfig, SchemeValidationError, require_lossless, validate
from .routines.sdw import MeasurementError, NormCollapseError, OccupiedOutputBoxError, ensemble_average

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_COMPARE = 4
EXIT_NUMERICAL = 5

DEFAULT_TOLERANCE = 0.05
BENCHMARK_REPEATS = 3
OBSERVABLES = ('population', 'entropy', 'emission_record')

RUN_KEYS = ('engine', 'n_trajectories', 'chi_max', 'rel_tol', 'master_seed', 'workers', 'output', 'observables',
            'entropy_every', 'keep_trajectories', 'log_format', 'tolerance')
MANIFEST_KEYS = tuple(SchemeConfig._fields) + RUN_KEYS

_logger = get_model_logger(__name__)


class ManifestError(ValueError):
    pass


class CompareFailure(Exception):
    pass


class Engine(Enum):

    MPS = 'mps'
    SDW = 'sdw'
    BOTH = 'both'
    ORACLE = 'oracle'

    @classmethod
    def parse(cls, value) -> 'Engine':
        if isinstance(value, Engine):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ManifestError("Unknown engine '%s'; expected one of %s" % (value, [e.value for e in cls]))

    @property
    def uses_mps(self) -> bool:
        return self in (Engine.MPS, Engine.BOTH)

    @property
    def uses_sdw(self) -> bool:
        return self in (Engine.SDW, Engine.BOTH)


class RunManifest(NamedTuple):
    """A validated run: the physical configuration plus engine and output settings."""
    config: SchemeConfig
    engine: Engine = Engine.MPS
    n_trajectories: int = 1000
    chi_max: Optional[int] = None
    rel_tol: float = DEFAULT_REL_TOL
    master_seed: int = 0
    workers: int = 1
    output: Path = Path('wgqed_result.csv')
    observables: frozenset = frozenset({'population'})
    entropy_every: int = 1
    keep_trajectories: int = 0
    log_format: str = LogFormats.FANCY.value
    tolerance: float = DEFAULT_TOLERANCE

    @classmethod
    def from_config(cls, config: Config) -> 'RunManifest':
        """
        Raises:
            ManifestError: for unknown keys or inconsistent run settings (message carries the file and line)
            ConfigTypeError: for values of the wrong type
            SchemeValidationError: for invalid physics parameters
        """
        for key in config:
            if key not in MANIFEST_KEYS:
                raise ManifestError("%s: unknown key '%s'" % (config[key].location, key))

        scheme_config = SchemeConfig.from_config(config)
        validate(scheme_config)

        kwargs = {'config': scheme_config}
        for key in ('n_trajectories', 'chi_max', 'master_seed', 'workers', 'entropy_every', 'keep_trajectories'):
            if key in config and config[key] is not None:
                kwargs[key] = config[key].as_int()
        for key in ('rel_tol', 'tolerance'):
            if key in config and config[key] is not None:
                kwargs[key] = config[key].as_float()
        if 'engine' in config:
            try:
                kwargs['engine'] = Engine.parse(config.engine.as_str())
            except ManifestError as err:
                raise ManifestError("%s: %s" % (config.engine.location, err))
        if 'output' in config:
            kwargs['output'] = config.output.as_path()
        if 'log_format' in config:
            kwargs['log_format'] = config.log_format.as_str().strip().upper()
        if 'observables' in config:
            observables = frozenset(o.lower() for o in config.observables.as_list(str))
            unknown = observables - set(OBSERVABLES)
            if unknown:
                raise ManifestError("%s: unknown observable(s) %s" % (config.observables.location, sorted(unknown)))
            kwargs['observables'] = observables

        manifest = cls(**kwargs)
        manifest.check()
        return manifest

    def check(self):
        engine = self.engine
        if 'entropy' in self.observables and not engine.uses_mps:
            raise ManifestError("The entropy observable needs the MPS engine, not '%s'" % engine.value)
        if 'emission_record' in self.observables and not engine.uses_sdw:
            raise ManifestError("The emission record needs the SDW engine, not '%s'" % engine.value)
        if engine.uses_mps:
            require_lossless(self.config)
        if self.n_trajectories < 1:
            raise ManifestError("n_trajectories must be at least 1, got %d" % self.n_trajectories)
        if self.chi_max is not None and self.chi_max < 1:
            raise ManifestError("chi_max must be at least 1, got %d" % self.chi_max)
        if self.entropy_every < 1:
            raise ManifestError("entropy_every must be at least 1, got %d" % self.entropy_every)

    def to_record(self) -> Dict[str, object]:
        """Every setting as a JSON-ready value; reading the record back reproduces this manifest."""
        record = OrderedDict()
        for name, value in zip(SchemeConfig._fields, self.config):
            if value is None:
                continue
            record[name] = value.value if isinstance(value, Enum) else value
        record['engine'] = self.engine.value
        record['n_trajectories'] = self.n_trajectories
        if self.chi_max is not None:
            record['chi_max'] = self.chi_max
        record['rel_tol'] = self.rel_tol
        record['master_seed'] = self.master_seed
        record['workers'] = self.workers
        record['output'] = str(self.output)
        record['observables'] = ','.join(sorted(self.observables))
        record['entropy_every'] = self.entropy_every
        record['keep_trajectories'] = self.keep_trajectories
        record['log_format'] = self.log_format
        record['tolerance'] = self.tolerance
        return record

    def header(self, engine: str) -> Dict[str, object]:
        header = OrderedDict([('wgqed_version', __version__), ('engine', engine)])
        for key, value in self.to_record().items():
            if key in ('engine', 'output', 'log_format', 'workers'):
                continue
            header[key] = repr(value) if isinstance(value, float) else value
        return header


def load_manifest(path=None, overrides: Dict[str, object] = None, rerun=None) -> RunManifest:
    """Builds a manifest from a key = value file (or a metadata record for ``rerun``) plus command-line overrides."""
    if rerun is not None:
        config = Config.from_json(rerun, section='config')
    elif path is not None:
        config = Config.from_file(path)
    else:
        config = Config.from_dict({}, file_name='<defaults>')
    if overrides:
        config.update(overrides)
    return RunManifest.from_config(config)

# region Simulation


class EngineResult(NamedTuple):
    engine: str
    table: pd.DataFrame
    diagnostics: Dict[str, object]
    emissions: Optional[pd.DataFrame] = None
    trajectories: Optional[pd.DataFrame] = None


def _versions() -> Dict[str, str]:
    return OrderedDict([('wgqed', __version__), ('numpy', np.__version__), ('scipy', scipy.__version__),
                        ('pandas', pd.__version__)])


def _simulate_mps(manifest: RunManifest) -> EngineResult:
    sink = {}
    observables = [o for o in ('population', 'entropy') if o in manifest.observables] or ['population']
    with timed(_logger, 'mps', sink):
        result = run_mps(manifest.config, chi_max=manifest.chi_max, rel_tol=manifest.rel_tol,
                         observables=observables, entropy_every=manifest.entropy_every)
    diagnostics = OrderedDict([
        ('wall_clock_s', sink['mps']), ('discarded_weight', result.discarded_weight), ('max_bond', result.max_bond),
        ('versions', _versions())
    ])
    return EngineResult('mps', result.table, diagnostics)


def _simulate_sdw(manifest: RunManifest) -> EngineResult:
    sink = {}
    with timed(_logger, 'sdw', sink):
        result = ensemble_average(manifest.config, manifest.n_trajectories, manifest.master_seed, manifest.workers,
                                  keep_trajectories=manifest.keep_trajectories)
    diagnostics = OrderedDict([
        ('wall_clock_s', sink['sdw']), ('master_seed', manifest.master_seed),
        ('n_trajectories', result.n_trajectories), ('n_emissions', len(result.emissions)),
        ('n_jumps', result.n_jumps), ('versions', _versions())
    ])
    emissions = result.emissions if 'emission_record' in manifest.observables else None
    trajectories = result.trajectories if manifest.keep_trajectories > 0 else None
    return EngineResult('sdw', result.table, diagnostics, emissions, trajectories)


def _simulate_oracle(manifest: RunManifest) -> EngineResult:
    sink = {}
    with timed(_logger, 'oracle', sink):
        curve = reference_curve(manifest.config)
    diagnostics = OrderedDict([('wall_clock_s', sink['oracle']), ('method', curve.method.value),
                               ('versions', _versions())])
    return EngineResult('oracle', curve.table, diagnostics)


_SIMULATORS = {'mps': _simulate_mps, 'sdw': _simulate_sdw, 'oracle': _simulate_oracle}


def simulate(manifest: RunManifest) -> List[EngineResult]:
    if manifest.engine is Engine.BOTH:
        return [_simulate_mps(manifest), _simulate_sdw(manifest)]
    return [_SIMULATORS[manifest.engine.value](manifest)]


def _result_path(manifest: RunManifest, engine: str) -> Path:
    stem = output_stem(manifest.output)
    if manifest.engine is Engine.BOTH:
        return Path("%s_%s.csv" % (stem, engine))
    return Path("%s.csv" % stem)


def run(manifest: RunManifest) -> List[Path]:
    """
    Runs a manifest and writes, per engine, the result table, its JSON metadata record and (SDW) the emission record
    and kept trajectories. With ``engine = both`` a comparison report is also written.

    Returns:
        The paths of every result table written
    """
    written = []
    results = simulate(manifest)
    for result in results:
        path = _result_path(manifest, result.engine)
        header = manifest.header(result.engine)
        write_table(result.table, path, header)
        write_metadata(path, manifest.to_record(), result.diagnostics)
        if result.emissions is not None:
            write_emissions(result.emissions, path, header)
        if result.trajectories is not None:
            write_table(result.trajectories, Path("%s_trajectories.csv" % output_stem(path)), header)
        _logger.report("Wrote %s", path, extra={'engine': result.engine})
        written.append(path)

    if manifest.engine is Engine.BOTH:
        report = compare_tables(results[0].table, results[1].table, manifest.tolerance)
        path = Path("%s_comparison.csv" % output_stem(manifest.output))
        write_table(report.table, path, OrderedDict([('tolerance', repr(manifest.tolerance))]))
        _log_report(report)
        written.append(path)
    return written

# endregion

# region Comparison and timing


def _log_report(report: ComparisonReport):
    for row in report.table.itertuples(index=False):
        _logger.report("%s: sup %.3e, rms %.3e, max z %.2f -> %s", row.observable, row.sup, row.rms, row.max_z,
                       'pass' if row.passed else 'FAIL')


def compare(path_a, path_b, tolerance: float = DEFAULT_TOLERANCE, output=None) -> ComparisonReport:
    """Compares two result tables; writes the report when ``output`` is given"""
    table_a, _ = read_table(path_a)
    table_b, _ = read_table(path_b)
    report = compare_tables(table_a, table_b, tolerance)
    _log_report(report)
    if output is not None:
        header = OrderedDict([('a', str(path_a)), ('b', str(path_b)), ('tolerance', repr(float(tolerance)))])
        write_table(report.table, output, header)
    return report


def benchmark(manifests: Sequence[Tuple[str, RunManifest]], repeats: int = BENCHMARK_REPEATS) -> pd.DataFrame:
    """
    Wall-clock time of each (name, manifest), repeated ``repeats`` times. One row per manifest and engine with the
    median and range in seconds. Absolute values depend on the machine; only their ordering is meaningful.
    """
    rows = []
    for name, manifest in manifests:
        timings = {}
        for _ in range(repeats):
            for result in simulate(manifest):
                timings.setdefault(result.engine, []).append(result.diagnostics['wall_clock_s'])
        for engine, values in timings.items():
            rows.append((name, engine, float(np.median(values)), float(np.min(values)), float(np.max(values)),
                         len(values)))
    return pd.DataFrame(rows, columns=['manifest', 'engine', 'median_s', 'min_s', 'max_s', 'repeats'])


def parse_grid(items: Sequence[str]) -> List[Tuple[str, List[str]]]:
    grid = []
    for item in items:
        if '=' not in item:
            raise ManifestError("Grid entries look like key=v1,v2; got '%s'" % item)
        key, values = (part.strip() for part in item.split('=', 1))
        if key not in MANIFEST_KEYS:
            raise ManifestError("Unknown grid key '%s'" % key)
        values = [v.strip() for v in values.split(',') if v.strip()]
        if not values:
            raise ManifestError("Grid key '%s' has no values" % key)
        grid.append((key, values))
    return grid


def _grid_label(point: Sequence[Tuple[str, str]]) -> str:
    return '_'.join("%s-%s" % (key, re.sub(r'[^\w.+-]', '', value)) for key, value in point)


def sweep(path, grid: Sequence[Tuple[str, List[str]]], overrides: Dict[str, object] = None) -> List[Path]:
    """Runs every point of the cartesian product of ``grid``; each point writes to ``<output stem>_<point>.csv``"""
    base = load_manifest(path, overrides)
    stem = output_stem(base.output)
    keys = [key for key, _ in grid]
    written = []
    for values in itertools.product(*[v for _, v in grid]):
        point = list(zip(keys, values))
        point_overrides = OrderedDict(overrides or {})
        point_overrides.update(point)
        point_overrides['output'] = "%s_%s.csv" % (stem, _grid_label(point))
        _logger.tip("Sweep point %s", ', '.join("%s = %s" % kv for kv in point))
        written.extend(run(load_manifest(path, point_overrides)))
    return written

# endregion

# region Entry point


def _add_manifest_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group('manifest keys', 'override the value of the same key in the manifest file')
    for key in MANIFEST_KEYS:
        group.add_argument('--' + key, dest=key, default=None, metavar='VALUE')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='wgqed', description="Waveguide QED with time-delayed feedback: MPS and "
                                                               "quantum-trajectory engines")
    parser.add_argument('--log-file', default=None, help="Mirror log records into this file")
    parser.add_argument('--debug', action='store_true', help="Emit DEBUG records")
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    p_run = subparsers.add_parser('run', help="Run one manifest")
    p_run.add_argument('manifest', nargs='?', default=None, help="key = value manifest file")
    p_run.add_argument('--rerun', default=None, metavar='META_JSON', help="Re-run from a result's metadata record")
    _add_manifest_flags(p_run)

    p_compare = subparsers.add_parser('compare', help="Distance between two result tables")
    p_compare.add_argument('result_a')
    p_compare.add_argument('result_b')
    p_compare.add_argument('--tolerance', type=float, default=DEFAULT_TOLERANCE)
    p_compare.add_argument('--output', default=None, help="Write the report table here")

    p_bench = subparsers.add_parser('benchmark', help="Time one or more manifests")
    p_bench.add_argument('manifests', nargs='*')
    p_bench.add_argument('--repeats', type=int, default=BENCHMARK_REPEATS)
    p_bench.add_argument('--output', default=None, help="Write the timing table here")

    p_sweep = subparsers.add_parser('sweep', help="Run a cartesian grid of overrides")
    p_sweep.add_argument('manifest', nargs='?', default=None)
    p_sweep.add_argument('--grid', action='append', default=[], metavar='KEY=V1,V2',
                         help="Grid axis; repeat for more axes")
    _add_manifest_flags(p_sweep)
    return parser


def _overrides(args) -> Dict[str, object]:
    return OrderedDict((key, getattr(args, key)) for key in MANIFEST_KEYS if getattr(args, key, None) is not None)


def _dispatch(args) -> int:
    if args.command == 'run':
        manifest = load_manifest(args.manifest, _overrides(args), rerun=args.rerun)
        init_root(stream_format=manifest.log_format, log_debug=args.debug)
        run(manifest)
        return EXIT_OK

    if args.command == 'compare':
        report = compare(args.result_a, args.result_b, args.tolerance, args.output)
        if not report.passed:
            raise CompareFailure("Comparison of %s and %s exceeds tolerance %g" % (args.result_a, args.result_b,
                                                                                   args.tolerance))
        return EXIT_OK

    if args.command == 'benchmark':
        manifests = [(Path(p).stem, load_manifest(p)) for p in args.manifests]
        table = benchmark(manifests, args.repeats)
        if args.output is not None:
            write_table(table, args.output)
        for row in table.itertuples(index=False):
            _logger.report("%s [%s]: median %.3f s over %d runs", row.manifest, row.engine, row.median_s, row.repeats)
        return EXIT_OK

    if args.command == 'sweep':
        sweep(args.manifest, parse_grid(args.grid), _overrides(args))
        return EXIT_OK

    raise ManifestError("Unknown command '%s'" % args.command)


def main(argv: Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    init_root(log_debug=args.debug)
    try:
        if args.log_file is not None:
            with log_to_file(args.log_file):
                return _dispatch(args)
        return _dispatch(args)
    except CompareFailure as err:
        _logger.error(str(err))
        return EXIT_COMPARE
    except (ConfigParseError, ConfigSpecificationError, ConfigTypeError, SchemeValidationError, ManifestError,
            OracleDomainError, GridMismatchError) as err:
        _logger.error(str(err))
        return EXIT_CONFIG
    except (NormCollapseError, OccupiedOutputBoxError, MeasurementError, DegenerateMatrixError, ContractionError,
            FloatingPointError) as err:
        _logger.error("Numerical failure: %s" % err)
        return EXIT_NUMERICAL
    except OSError as err:
        _logger.error(str(err))
        return EXIT_IO


# endregion


if __name__ == '__main__':
    sys.exit(main())
