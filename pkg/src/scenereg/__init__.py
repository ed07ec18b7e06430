"""Register scanned objects into scene scans, supervise Sim(3) poses, evaluate and generate scenes"""

__version__ = "0.1.0"

from .config import RunConfig, resolve_run_config
from .errors import SceneRegError
from .manifest import SceneManifest
from .pose import Pose7DoF, RigidTransform, Sim3Transform

__all__ = [
    "Pose7DoF",
    "RigidTransform",
    "RunConfig",
    "SceneManifest",
    "SceneRegError",
    "Sim3Transform",
    "__version__",
    "resolve_run_config",
]
