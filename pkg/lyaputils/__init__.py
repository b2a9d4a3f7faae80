__version__ = '0.1.0'


class LyapException(Exception):
    pass


class DimensionException(LyapException, ValueError):
    pass


class ConfigException(LyapException, ValueError):
    pass


class SequenceLengthException(LyapException, ValueError):
    pass


class DegenerateExpansionException(LyapException, ArithmeticError):
    pass


class FormatException(LyapException, ValueError):
    """
    Raised when a file cannot be parsed or fails validation. The path
    and a location (line/column, field path or block/row) are kept as
    attributes and rendered into the message.
    """
    def __init__(self, path, location, msg):
        self.path = str(path)
        self.location = location
        self.msg = msg
        super().__init__('%s (%s): %s' % (self.path, location, msg))

    def __reduce__(self):
        return (self.__class__, (self.path, self.location, self.msg))


from . import core
from . import utils
from .utils import ensembles, oracle, io_utils
