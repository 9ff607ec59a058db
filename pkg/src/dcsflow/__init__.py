"""Mobile-sensor flow sensing: POD bases, sparse waypoint selection and trajectory planning."""

from .flow import *  # noqa: F401,F403
from .pod import *  # noqa: F401,F403
from .reconstruct import *  # noqa: F401,F403
from .seeds import derive_seed  # noqa: F401
from .sparse import *  # noqa: F401,F403
from .trajectory import *  # noqa: F401,F403

__version__ = "0.1.0"
