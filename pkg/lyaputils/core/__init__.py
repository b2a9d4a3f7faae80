from .cells import *
from .estimator import *
