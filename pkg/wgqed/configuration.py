"""
Run manifests: flat ``key = value`` text files. Every value keeps the file and line it was read from, so conversion
and validation errors can point at the offending line.
"""
import json
import os
import re
from collections import OrderedDict
from io import StringIO
from pathlib import Path

import numexpr as ne
import numpy as np

from .routines.general import is_identifier
from .routines.io.common import open_file

_COMMENT_REGEX = re.compile(r'\s*(#|//).*$')
_EXPRESSION_REGEX = re.compile(r'^(?:[\d\s.+\-*/()eE]|pi)+$')
_TRUE_WORDS = {'true', 'yes', 'on', '1'}
_FALSE_WORDS = {'false', 'no', 'off', '0'}


class ConfigParseError(IOError):
    pass


class ConfigSpecificationError(AttributeError):
    pass


class ConfigTypeError(ValueError):
    pass


class ConfigValue(object):
    """
    One manifest entry. The raw value is kept as read (usually text) and converted on demand through the ``as_*``
    methods, which raise ``ConfigTypeError`` messages of the form ``run.cfg:4: <run.tau> = 'abc' could not be
    converted to float``.
    """

    def __init__(self, value, name, owner=None, line=None):
        self.value = value
        self._name = str(name)
        self._owner = owner
        self._line = line

    def __str__(self): return str(self.value)

    def __repr__(self): return "ConfigValue(%r)" % self.value

    @property
    def name(self): return self._name

    @property
    def line(self): return self._line

    @property
    def namespace(self):
        """``<config name>.<key>``"""
        if self._owner is None:
            return self._name
        return "%s.%s" % (self._owner.namespace, self._name)

    @property
    def location(self):
        """``<file>:<line>`` where this value was defined, or the source name when there is no line"""
        source = '<unknown>' if self._owner is None else self._owner.file
        if self._line is None:
            return str(source)
        return "%s:%d" % (source, self._line)

    def _fail(self, type_name):
        raise ConfigTypeError("%s: <%s> = '%s' could not be converted to %s" % (self.location, self.namespace,
                                                                                 self.value, type_name))

    def as_type(self, type_):
        """Calls ``type_`` on the raw value; ``ConfigTypeError`` if that fails."""
        try:
            return type_(self.value)
        except (TypeError, ValueError):
            self._fail(type_.__name__)

    def as_bool(self):
        """
        Reads true/false, yes/no, on/off or 1/0 (any case).

        Raises:
            ConfigTypeError: for any other text
        """
        if isinstance(self.value, bool):
            return self.value
        word = str(self.value).strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        self._fail('bool')

    def as_int(self):
        """
        Integers, or floats with no fractional part (``20.0``).

        Raises:
            ConfigTypeError: for anything else
        """
        try:
            number = float(self.value)
        except (TypeError, ValueError):
            self._fail('int')
        if not number.is_integer():
            self._fail('int')
        return int(number)

    def as_float(self):
        """
        Plain numbers, or arithmetic over numbers and ``pi`` such as ``2*pi`` or ``pi/4``, evaluated with numexpr.

        Raises:
            ConfigTypeError: if the text is neither
        """
        try:
            return float(self.value)
        except (TypeError, ValueError):
            pass

        text = str(self.value).strip()
        if not text or _EXPRESSION_REGEX.match(text) is None:
            self._fail('float')
        try:
            return float(ne.evaluate(text, local_dict={'pi': np.pi}, global_dict={}))
        except Exception:
            self._fail('float')

    def as_str(self):
        return self.as_type(str)

    def as_list(self, sub_type=None):
        """
        Splits text on commas (lists and tuples pass through) and optionally converts each item.

        Args:
            sub_type (type): Optional. ``float``, ``int`` and ``bool`` use the matching ``as_*`` rules; any other type
                is called on the item.

        Returns:
            list
        """
        if isinstance(self.value, (list, tuple)):
            items = list(self.value)
        else:
            items = [part.strip() for part in str(self.value).split(',')]
            items = [part for part in items if part]
        if sub_type is None:
            return items

        converters = {float: ConfigValue.as_float, int: ConfigValue.as_int, bool: ConfigValue.as_bool}
        converted = []
        for i, item in enumerate(items):
            child = ConfigValue(item, "%s[%d]" % (self._name, i), owner=self._owner, line=self._line)
            if sub_type in converters:
                converted.append(converters[sub_type](child))
            else:
                converted.append(child.as_type(sub_type))
        return converted

    def as_path(self, parent=None):
        """The value as a ``Path``, joined onto ``parent`` when one is given"""
        path = Path(self.as_str())
        return path if parent is None else Path(parent) / path

    def serialize(self):
        return self.value


class Config(object):
    """
    An ordered set of manifest entries. Keys that are valid Python names are also attributes, so ``config.tau`` and
    ``config['tau']`` both return the ``ConfigValue``; ``config.tau.as_float()`` converts it. Missing keys raise
    ``ConfigSpecificationError``.

    Build one with ``from_file()``, ``from_string()``, ``from_dict()`` or ``from_json()`` (the ``config`` section of
    a result's metadata record). ``update()`` layers command-line overrides on top; the overridden entries report
    ``<command line>`` as their location.
    """

    def __init__(self, config_dict, name=None, file_=None, lines=None):
        self._contents = OrderedDict()
        self._name = name
        self._file = file_
        lines = lines or {}

        for key, raw in config_dict.items():
            self._set(key, raw, lines.get(key))

    def _set(self, key, raw, line):
        if isinstance(raw, ConfigValue):
            raw = raw.value
        entry = None if raw is None else ConfigValue(raw, key, owner=self, line=line)
        if is_identifier(key) and not key.startswith('_'):
            if key in type(self).__dict__:
                raise ConfigSpecificationError("Config key '%s' shadows a Config attribute" % key)
            self.__dict__[key] = entry
        self._contents[key] = entry

    @property
    def name(self):
        """Short name of the config, usually the file stem."""
        return self._name

    @property
    def file(self):
        return self._file

    @property
    def namespace(self):
        return '<unnamed>' if self._name is None else self._name

    def __str__(self):
        return "Config @%s" % self._file

    def __getattr__(self, item):
        raise ConfigSpecificationError("<%s> has no key '%s'" % (self.namespace, item))

    def __contains__(self, item): return item in self._contents

    def __iter__(self): return iter(self._contents)

    def __len__(self): return len(self._contents)

    def __getitem__(self, item):
        try:
            return self._contents[item]
        except KeyError:
            raise ConfigSpecificationError("<%s> has no key '%s'" % (self.namespace, item))

    def keys(self):
        return list(self._contents)

    def update(self, overrides, source='<command line>'):
        """
        Sets (or adds) entries from a ``key -> raw value`` mapping; ``None`` values are skipped. The new entries report
        ``source`` as their location.
        """
        for key, raw in overrides.items():
            if raw is None:
                continue
            self._set(key, raw, None)
            self._contents[key]._owner = _SourceLabel(self, source)

    def serialize(self):
        """Raw values, in file order"""
        return OrderedDict((key, None if entry is None else entry.serialize()) for key, entry in self._contents.items())

    def to_string(self):
        out = []
        for key, raw in self.serialize().items():
            if raw is None:
                continue
            if isinstance(raw, (list, tuple, set)):
                raw = ','.join(str(item) for item in raw)
            out.append("%s = %s" % (key, raw))
        return '\n'.join(out) + '\n'

    def to_file(self, fp):
        """Writes ``key = value`` lines that ``from_file`` reads back"""
        with open_file(fp, mode='w') as writer:
            writer.write(self.to_string())

    @classmethod
    def from_file(cls, fp):
        """
        Reads a manifest file.

        Raises:
            ConfigParseError: for a line without ``=``, an empty key or a repeated key (message names the line)
        """
        with open_file(fp, mode='r') as reader:
            raw, lines = cls._parse_lines(reader, str(fp))
        stem = os.path.splitext(os.path.basename(str(fp)))[0]
        return Config(raw, name=stem, file_=str(fp), lines=lines)

    @classmethod
    def from_string(cls, s, file_name='<from_str>', root_name='<root>'):
        """Parses manifest text; ``file_name`` and ``root_name`` only label error messages."""
        raw, lines = cls._parse_lines(StringIO(s), file_name)
        return Config(raw, name=root_name, file_=file_name, lines=lines)

    @staticmethod
    def from_dict(dict_, file_name='<from_dict>', root_name='<root>'):
        return Config(dict_, name=root_name, file_=file_name)

    @staticmethod
    def from_json(fp, section='config'):
        """Reads one section of a JSON metadata record (see ``wgqed.routines.io.tables.write_metadata``)"""
        with open_file(fp, mode='r') as reader:
            try:
                record = json.load(reader, object_pairs_hook=OrderedDict)
            except ValueError as err:
                raise ConfigParseError("%s: %s" % (fp, err))
        if section not in record:
            raise ConfigParseError("%s: metadata record has no '%s' section" % (fp, section))
        stem = os.path.splitext(os.path.basename(str(fp)))[0]
        return Config(record[section], name=stem, file_=str(fp))

    @staticmethod
    def _parse_lines(reader, file_name):
        raw = OrderedDict()
        lines = {}
        for number, text in enumerate(reader, start=1):
            body = _COMMENT_REGEX.sub('', text.rstrip('\n')).strip()
            if not body:
                continue
            if '=' not in body:
                raise ConfigParseError("%s:%d: expected 'key = value', got '%s'" % (file_name, number, text.strip()))
            key, value = (part.strip() for part in body.split('=', 1))
            if not key:
                raise ConfigParseError("%s:%d: missing key before '='" % (file_name, number))
            if key in raw:
                raise ConfigParseError("%s:%d: duplicate key '%s' (first defined on line %d)" % (
                    file_name, number, key, lines[key]
                ))
            raw[key] = value
            lines[key] = number
        return raw, lines


class _SourceLabel(object):
    """Owner of overridden entries, so their locations name the override source instead of the file"""

    def __init__(self, config, source):
        self._config = config
        self.file = source

    @property
    def namespace(self):
        return self._config.namespace
