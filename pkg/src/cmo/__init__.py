"""Simulated cache-miss-oblivious execution with transactional memory."""

from importlib.metadata import PackageNotFoundError, version

from .cache import AbortCause, CacheGeometry, CacheSim, CostModel
from .runtime import NobRO, NobRW, ObRO, ObRW, Runtime
from .shadow import InfeasibleError, SizeSpec, plan_layout
from .trace import TxTrace

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = ["AbortCause", "CacheGeometry", "CacheSim", "CostModel", "InfeasibleError",
           "NobRO", "NobRW", "ObRO", "ObRW", "Runtime", "SizeSpec", "TxTrace",
           "plan_layout", "__version__"]
