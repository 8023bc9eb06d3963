"""fpsim: deterministic federated-learning simulator with relevance-guided
pruning of the global model for communication-efficient exchange."""

from fpsim._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
