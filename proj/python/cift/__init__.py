"""Graph feature transfer with counterfactual intervention."""

from ._cift import *  # noqa: F401,F403
from ._cift import Error, __doc__  # noqa: F401
