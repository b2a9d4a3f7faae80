from .array_utils import *
from .features import *
