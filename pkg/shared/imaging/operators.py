"""Imaging forward models and their exact adjoints.

Every model maps real n×n images to a real "range layout" used by the gradient
engine: Fourier measurements are stored as interleaved (re, im) planes of shape
(2, n, n), sinograms as (angles, detectors). All maps accept leading batch axes.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from shared.autodiff.tensor import Tensor, linear_map
from shared.exceptions import ValidationError
from shared.models.enums import OperatorKind
from shared.utils.logging import get_logger
from shared.utils.seeding import derive_rng
from shared.utils.validators import require_finite, require_shape, require_square_image

logger = get_logger(__name__)


# ----------------------------------------------------------------- domain types

@dataclass(frozen=True, eq=False)
class Image:
    """Real n×n image"""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        require_square_image(arr, "image")
        require_finite(arr, "image")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class Mask:
    """Cartesian k-space sampling pattern"""

    keep: np.ndarray
    acceleration: float = 1.0

    def __post_init__(self):
        keep = np.array(self.keep, dtype=bool, copy=True)
        require_square_image(keep, "mask")
        if not keep.any():
            raise ValidationError("mask keeps no k-space samples")
        keep.flags.writeable = False
        object.__setattr__(self, "keep", keep)

    @property
    def n(self) -> int:
        return self.keep.shape[0]

    @property
    def rows(self) -> np.ndarray:
        return self.keep.any(axis=1)

    @classmethod
    def full(cls, n: int) -> "Mask":
        return cls(np.ones((n, n), dtype=bool), acceleration=1.0)


@dataclass(frozen=True, eq=False)
class Measurement:
    """Observation y: complex k-space (unobserved entries zero) or a real sinogram"""

    data: np.ndarray
    kind: OperatorKind

    def __post_init__(self):
        dtype = np.complex128 if self.kind == OperatorKind.FOURIER else np.float64
        arr = np.array(self.data, dtype=dtype, copy=True)
        require_finite(arr, "measurement")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    def to_real(self) -> np.ndarray:
        if self.kind == OperatorKind.FOURIER:
            return np.stack([self.data.real, self.data.imag], axis=0)
        return np.array(self.data, copy=True)

    @classmethod
    def from_real(cls, arr: np.ndarray, kind: OperatorKind) -> "Measurement":
        if kind == OperatorKind.FOURIER:
            if arr.ndim != 3 or arr.shape[0] != 2:
                raise ValidationError(f"Fourier real layout needs a leading axis of 2, got {arr.shape}")
            return cls(arr[0] + 1j * arr[1], kind)
        return cls(arr, kind)


# ----------------------------------------------------------------- the models

class ForwardModel:
    """Linear map A with exact adjoint A*"""

    kind: OperatorKind

    def __init__(self, n: int, range_shape: Tuple[int, ...]):
        self.n = n
        self.domain_shape = (n, n)
        self.range_shape = tuple(range_shape)

    def forward_real(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint_real(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def measurement(self, real: np.ndarray) -> Measurement:
        return Measurement.from_real(real, self.kind)

    def check_measurement(self, y: Measurement) -> None:
        if y.kind != self.kind:
            raise ValidationError(f"measurement kind {y.kind.value} does not match model kind {self.kind.value}")
        require_shape(y.to_real(), self.range_shape, "measurement")

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, range_shape={self.range_shape})"


class IdentityModel(ForwardModel):
    kind = OperatorKind.IDENTITY

    def __init__(self, n: int):
        super().__init__(n, (n, n))

    def forward_real(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=np.float64, copy=True)

    def adjoint_real(self, r: np.ndarray) -> np.ndarray:
        return np.array(r, dtype=np.float64, copy=True)


class FourierModel(ForwardModel):
    """Masked unitary 2-D DFT"""

    kind = OperatorKind.FOURIER

    def __init__(self, mask: Mask):
        super().__init__(mask.n, (2, mask.n, mask.n))
        self.mask = mask

    def with_mask(self, mask: Mask) -> "FourierModel":
        if mask.n != self.n:
            raise ValidationError(f"mask side {mask.n} does not match model side {self.n}")
        return FourierModel(mask)

    def forward_real(self, x: np.ndarray) -> np.ndarray:
        spectrum = np.fft.fft2(x, norm="ortho") * self.mask.keep
        return np.stack([spectrum.real, spectrum.imag], axis=-3)

    def adjoint_complex(self, r: np.ndarray) -> np.ndarray:
        spectrum = (r[..., 0, :, :] + 1j * r[..., 1, :, :]) * self.mask.keep
        return np.fft.ifft2(spectrum, norm="ortho")

    def adjoint_real(self, r: np.ndarray) -> np.ndarray:
        return self.adjoint_complex(r).real


class RadonModel(ForwardModel):
    """Parallel-beam projector stored as an explicit sparse matrix"""

    kind = OperatorKind.RADON

    def __init__(self, n: int, angles: np.ndarray, n_detectors: int, matrix: sp.csr_matrix):
        super().__init__(n, (len(angles), n_detectors))
        self.angles = np.array(angles, dtype=np.float64, copy=True)
        self.n_detectors = n_detectors
        self.matrix = matrix.tocsr()
        self._transpose = self.matrix.T.tocsr()

    def forward_real(self, x: np.ndarray) -> np.ndarray:
        batch = x.shape[:-2]
        flat = np.asarray(x, dtype=np.float64).reshape(-1, self.n * self.n)
        out = (self.matrix @ flat.T).T
        return out.reshape(batch + self.range_shape)

    def adjoint_real(self, r: np.ndarray) -> np.ndarray:
        batch = r.shape[:-2]
        flat = np.asarray(r, dtype=np.float64).reshape(-1, self.range_shape[0] * self.range_shape[1])
        out = (self._transpose @ flat.T).T
        return out.reshape(batch + self.domain_shape)


# ----------------------------------------------------------------- operations

def fourier_from_mask(mask: Mask) -> FourierModel:
    return FourierModel(mask)


def fourier_apply(x: Image, m: Mask) -> Measurement:
    """Unitary DFT of x with unobserved frequencies zeroed"""
    if x.n != m.n:
        raise ValidationError(f"image side {x.n} does not match mask side {m.n}")
    spectrum = np.fft.fft2(x.data, norm="ortho") * m.keep
    return Measurement(spectrum, OperatorKind.FOURIER)


def fourier_adjoint(y: Measurement, m: Mask) -> Image:
    """Inverse unitary DFT of the masked measurement, real part"""
    if y.kind != OperatorKind.FOURIER:
        raise ValidationError(f"fourier_adjoint needs a Fourier measurement, got {y.kind.value}")
    if y.data.shape != m.keep.shape:
        raise ValidationError(f"measurement shape {y.data.shape} does not match mask {m.keep.shape}")
    masked = y.data * m.keep
    image = np.fft.ifft2(masked, norm="ortho")
    residual = float(np.max(np.abs(image.imag)))
    if residual > 1e-9 and _conjugate_symmetric(masked):
        logger.warning("imaginary residual in adjoint of conjugate-symmetric data", residual=residual)
    return Image(image.real)


def _conjugate_symmetric(spectrum: np.ndarray, tol: float = 1e-12) -> bool:
    mirrored = np.conj(np.roll(np.flip(spectrum, axis=(0, 1)), 1, axis=(0, 1)))
    scale = max(float(np.max(np.abs(spectrum))), 1.0)
    return bool(np.max(np.abs(spectrum - mirrored)) <= tol * scale)


def _ray_weights(n: int, theta: float, offset: float) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel indices and exact intersection lengths of one ray with the n×n grid.

    The image covers [-n/2, n/2]^2; pixel (i, j) spans x in [j - n/2, j + 1 - n/2]
    and y in [n/2 - i - 1, n/2 - i]. The ray is s*(cos, sin) + t*(-sin, cos).
    """
    half = n / 2.0
    origin = np.array([offset * math.cos(theta), offset * math.sin(theta)])
    direction = np.array([-math.sin(theta), math.cos(theta)])
    t_lo, t_hi = -np.inf, np.inf
    for axis in range(2):
        if abs(direction[axis]) < 1e-15:
            if not -half <= origin[axis] <= half:
                return np.empty(0, dtype=np.int64), np.empty(0)
            continue
        t1 = (-half - origin[axis]) / direction[axis]
        t2 = (half - origin[axis]) / direction[axis]
        t_lo, t_hi = max(t_lo, min(t1, t2)), min(t_hi, max(t1, t2))
    if not t_hi > t_lo:
        return np.empty(0, dtype=np.int64), np.empty(0)

    grid = np.arange(n + 1, dtype=np.float64) - half
    crossings = [np.array([t_lo, t_hi])]
    for axis in range(2):
        if abs(direction[axis]) >= 1e-15:
            t = (grid - origin[axis]) / direction[axis]
            crossings.append(t[(t > t_lo) & (t < t_hi)])
    t_all = np.unique(np.concatenate(crossings))
    lengths = np.diff(t_all)
    mids = 0.5 * (t_all[:-1] + t_all[1:])
    xs = origin[0] + mids * direction[0]
    ys = origin[1] + mids * direction[1]
    cols = np.floor(xs + half).astype(np.int64)
    rows = np.floor(half - ys).astype(np.int64)
    valid = (lengths > 1e-12) & (rows >= 0) & (rows < n) & (cols >= 0) & (cols < n)
    return rows[valid] * n + cols[valid], lengths[valid]


def detector_offsets(n: int, n_detectors: int) -> np.ndarray:
    """Detector bin centres spread over the image diagonal"""
    spacing = math.sqrt(2.0) * n / n_detectors
    return (np.arange(n_detectors) - (n_detectors - 1) / 2.0) * spacing


def radon_build(n: int, n_angles: int, n_detectors: Optional[int] = None) -> RadonModel:
    """Sparse parallel-beam Radon matrix with pixel-intersection-length weights"""
    if n_detectors is None:
        n_detectors = int(math.ceil(math.sqrt(2.0) * n))
    if n_angles < 1:
        raise ValidationError(f"n_angles must be >= 1, got {n_angles}")
    if n_detectors < n:
        raise ValidationError(f"n_detectors must be >= n ({n}), got {n_detectors}")
    angles = np.pi * np.arange(n_angles) / n_angles
    offsets = detector_offsets(n, n_detectors)
    rows, cols, vals = [], [], []
    for a, theta in enumerate(angles):
        for d, offset in enumerate(offsets):
            pixels, lengths = _ray_weights(n, float(theta), float(offset))
            rows.append(np.full(pixels.size, a * n_detectors + d, dtype=np.int64))
            cols.append(pixels)
            vals.append(lengths)
    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_angles * n_detectors, n * n),
    )
    logger.debug("built radon matrix", n=n, n_angles=n_angles, n_detectors=n_detectors, nnz=matrix.nnz)
    return RadonModel(n, angles, n_detectors, matrix)


def apply(fm: ForwardModel, x: Image) -> Measurement:
    if x.data.shape != fm.domain_shape:
        raise ValidationError(f"image shape {x.data.shape} does not match model domain {fm.domain_shape}")
    return fm.measurement(fm.forward_real(x.data))


def adjoint(fm: ForwardModel, y: Measurement) -> Image:
    fm.check_measurement(y)
    if isinstance(fm, FourierModel):
        return fourier_adjoint(y, fm.mask)
    return Image(fm.adjoint_real(y.to_real()))


def adjoint_test(fm: ForwardModel, trials: int = 100, seed: int = 0) -> float:
    """Max over random vector pairs of |<Ax, y> - <x, A*y>| / max(|<Ax, y>|, 1e-12)"""
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    rng = derive_rng(seed, "adjoint_test", fm.kind.value)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(fm.domain_shape)
        y = rng.standard_normal(fm.range_shape)
        lhs = float(np.sum(fm.forward_real(x) * y))
        rhs = float(np.sum(x * fm.adjoint_real(y)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-12))
    logger.info("adjoint test", kind=fm.kind.value, n=fm.n, trials=trials, max_discrepancy=worst)
    return worst


# ----------------------------------------------------------------- graph nodes

def forward_tensor(fm: ForwardModel, x: Tensor) -> Tensor:
    """A applied inside the gradient engine; backpropagates through A*"""
    return linear_map(x, fm.forward_real, fm.adjoint_real, f"{fm.kind.value}_forward")


def adjoint_tensor(fm: ForwardModel, r: Tensor) -> Tensor:
    """A* applied inside the gradient engine; backpropagates through A"""
    return linear_map(r, fm.adjoint_real, fm.forward_real, f"{fm.kind.value}_adjoint")
