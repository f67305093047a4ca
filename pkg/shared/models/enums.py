import enum


class OperatorKind(str, enum.Enum):
    """Forward model families"""
    FOURIER = "fourier"
    RADON = "radon"
    IDENTITY = "identity"


class PhantomKind(str, enum.Enum):
    """Synthetic image families"""
    ELLIPSES = "ellipses"
    BLOCKS = "blocks"


class FlipGranularity(str, enum.Enum):
    """Unit toggled when perturbing a sampling mask"""
    ROWS = "rows"
    ENTRIES = "entries"


class Activation(str, enum.Enum):
    """Smooth 1-Lipschitz pointwise nonlinearities"""
    TANH = "tanh"
    SOFTPLUS = "softplus"


class RegularizerKind(str, enum.Enum):
    """Analytic regularizers for the classical gradient-flow baseline"""
    TIKHONOV = "tikhonov"
    SMOOTHED_TV = "smoothed_tv"


class AblationAxis(str, enum.Enum):
    """Hyperparameter swept by an ablation run"""
    N = "N"
    GAMMA = "gamma"
    LAMBDA = "lambda"
    WITHOUT_A = "without_A"
