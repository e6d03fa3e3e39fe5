"""
Logging for simulation runs. Two extra levels sit around INFO: REPORT (19) for results and numerical diagnostics and
TIP (21) for stage banners. Console output is coloured (FANCY), plain (BASIC) or one JSON object per line (JSON).
"""
import json
import logging
import sys
import time
import traceback
from contextlib import contextmanager
from enum import Enum

_RECORD_FORMAT = "%(asctime)s %(levelname)s %(name)s {arrow} %(message)s"
_ARROWS = {True: "->", False: "➔"}  # keyed by raw_ascii
_TIP_LEVEL = 21
_REPORT_LEVEL = 19
_ROOT_NAME = 'wgqed'

# ANSI SGR codes
_COLOURS = {
    logging.DEBUG: '37',
    logging.INFO: '0',
    _REPORT_LEVEL: '32',
    _TIP_LEVEL: '34',
    logging.WARNING: '31',
    logging.ERROR: '41',
    logging.CRITICAL: '1;41'
}


class LogFormats(Enum):

    FANCY = "FANCY"
    BASIC = "BASIC"
    JSON = "JSON"

    @classmethod
    def parse(cls, value) -> 'LogFormats':
        if isinstance(value, LogFormats):
            return value
        return cls[str(value).strip().upper()]


class _ColourFormatter(logging.Formatter):
    """Wraps each formatted record in the colour of its level"""

    def __init__(self):
        super().__init__(_RECORD_FORMAT.format(arrow=_ARROWS[False]))

    def format(self, record):
        text = super().format(record)
        colour = _COLOURS.get(record.levelno)
        return text if colour is None else "\x1b[%sm%s\x1b[0m" % (colour, text)


class _JsonFormatter(logging.Formatter):
    """Numerical context passed through ``extra=`` (engine, trajectory, step) is kept as extra fields."""

    _EXTRA_KEYS = ('engine', 'trajectory', 'step')

    def format(self, record):
        payload = {
            'time': self.formatTime(record), 'level': record.levelname, 'levelno': record.levelno,
            'logger': record.name, 'message': record.getMessage(), 'created': record.created
        }
        payload.update((key, getattr(record, key)) for key in self._EXTRA_KEYS if hasattr(record, key))
        if record.exc_info:
            payload['exception'] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


class SimulationLogger(logging.Logger):
    """
    ``report()`` logs results and diagnostics (discarded weight, ensemble sizes, distances); ``tip()`` announces a
    stage of a run (building a propagator, starting an ensemble).
    """

    def report(self, msg, *args, **kwargs):
        self.log(_REPORT_LEVEL, msg, *args, **kwargs)

    def tip(self, msg, *args, **kwargs):
        self.log(_TIP_LEVEL, msg, *args, **kwargs)


def _register_levels():
    logging.addLevelName(_REPORT_LEVEL, 'REPORT')
    logging.addLevelName(_TIP_LEVEL, 'TIP')
    logging.setLoggerClass(SimulationLogger)


def _stream_formatter(stream_format) -> logging.Formatter:
    try:
        stream_format = LogFormats.parse(stream_format)
    except KeyError:
        return logging.Formatter(stream_format)
    if stream_format is LogFormats.FANCY:
        return _ColourFormatter()
    if stream_format is LogFormats.JSON:
        return _JsonFormatter()
    return logging.Formatter(_RECORD_FORMAT.format(arrow=_ARROWS[True]))


def init_root(root_name=_ROOT_NAME, stream_format=LogFormats.FANCY, log_debug=False) -> SimulationLogger:
    """
    Points the package root logger at stdout, replacing any handler it already has.

    Args:
        root_name (str): Logger to configure. Defaults to the package name.
        stream_format (Union[LogFormats, str]): FANCY, BASIC, JSON, or a ``logging`` format string.
        log_debug (bool): Let DEBUG records through. Otherwise REPORT is the lowest level shown.
    """
    _register_levels()
    root = logging.getLogger(root_name)
    root.propagate = False
    root.setLevel(logging.DEBUG if log_debug else _REPORT_LEVEL)

    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(_stream_formatter(stream_format))
    root.handlers.clear()
    root.addHandler(handler)
    return root


def get_model_logger(name) -> SimulationLogger:
    _register_levels()
    return logging.getLogger(name)


@contextmanager
def log_to_file(file_name: str, name=_ROOT_NAME, append=False, raw_ascii=False):
    """Copies the records of logger ``name`` into ``file_name`` while the block runs. A failing block's traceback is
    appended to the file before the exception propagates."""
    logger = logging.getLogger(name)
    handler = logging.FileHandler(file_name, mode='a' if append else 'w', encoding='utf-8')
    handler.setFormatter(logging.Formatter(_RECORD_FORMAT.format(arrow=_ARROWS[raw_ascii])))
    logger.addHandler(handler)
    try:
        yield
    except BaseException:
        handler.flush()
        with open(file_name, mode='a', encoding='utf-8') as writer:
            writer.write("\n%s\n\n%s" % ('=' * 80, traceback.format_exc()))
        raise
    finally:
        logger.removeHandler(handler)
        handler.close()


@contextmanager
def timed(logger: SimulationLogger, label: str, sink: dict = None):
    """
    Reports the wall-clock duration of a block. If ``sink`` is given, the elapsed seconds are also stored under
    ``sink[label]`` so callers can put them in a metadata record.
    """
    start = time.perf_counter()
    try:
        yield
    finally:
        elapsed = time.perf_counter() - start
        if sink is not None:
            sink[label] = elapsed
        logger.report("%s took %.3f s", label, elapsed)
