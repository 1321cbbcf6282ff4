"""Student-interaction simulator toolkit.

Learns user/exercise representations online from interaction logs,
trains success and dropout predictors on windowed histories, and exposes
a reward-emitting environment for training exercise-sequencing agents.
"""

from studysim._core import available_backends, backend_name

__version__ = "0.1.0"

__all__ = ["available_backends", "backend_name", "__version__"]
