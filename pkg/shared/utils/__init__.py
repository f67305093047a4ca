from .logging import setup_logging, get_logger
from .seeding import derive_rng
from .validators import require_finite, require_shape

__all__ = [
    "setup_logging",
    "get_logger",
    "derive_rng",
    "require_finite",
    "require_shape",
]
