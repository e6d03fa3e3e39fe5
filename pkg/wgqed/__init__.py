__version__ = '1.0'

from .routines import *
from .configuration import Config, ConfigParseError, ConfigSpecificationError, ConfigTypeError
