"""Synthetic phantoms, sampling masks, noise and dataset assembly.

Every random draw comes from a stream keyed by (seed, subset, index), so growing
one subset never changes the samples of another and a stored meta document
regenerates the whole dataset exactly.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from shared.exceptions import DatasetFormatError, ValidationError
from shared.imaging.operators import (
    FourierModel,
    ForwardModel,
    IdentityModel,
    Image,
    Mask,
    Measurement,
    RadonModel,
    radon_build,
)
from shared.models.configs import DataConfig, NoiseConfig
from shared.models.enums import FlipGranularity, OperatorKind, PhantomKind
from shared.models.records import DatasetMeta
from shared.utils.arrays import read_raw, write_raw
from shared.utils.logging import get_logger
from shared.utils.seeding import derive_rng, stream_key

logger = get_logger(__name__)

META_FILE = "meta.json"


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


# ------------------------------------------------------------------- phantoms

def make_phantom(kind: PhantomKind, n: int, seed: int) -> Image:
    """Random piecewise-constant test image with values in [0, 1]"""
    kind = PhantomKind(kind)
    if n < 8:
        raise ValidationError(f"phantom side must be >= 8, got {n}")
    rng = derive_rng(seed, "phantom", kind.value)
    if kind == PhantomKind.ELLIPSES:
        image = _nested_ellipses(n, rng)
    else:
        image = _blocks(n, rng)
    return Image(np.clip(image, 0.0, 1.0))


def _nested_ellipses(n: int, rng: np.random.Generator) -> np.ndarray:
    coords = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    xx, yy = np.meshgrid(coords, -coords)
    count = int(rng.integers(3, 8))
    # evenly spaced levels with jitter below half the spacing stay distinct
    levels = np.linspace(0.15, 0.95, count)
    spacing = 0.8 / max(count - 1, 1)
    levels = rng.permutation(levels + rng.uniform(-0.4, 0.4, count) * spacing)

    image = np.zeros((n, n))
    center = rng.uniform(-0.1, 0.1, size=2)
    axes = rng.uniform(0.55, 0.85, size=2)
    for i in range(count):
        if i > 0:
            new_axes = axes * rng.uniform(0.45, 0.8)
            # the new ellipse sits inside the disc inscribed in the previous one
            room = max(float(axes.min() - new_axes.max()), 0.0)
            heading = rng.uniform(0.0, 2.0 * np.pi)
            center = center + rng.uniform(0.0, room) * np.array([np.cos(heading), np.sin(heading)])
            axes = new_axes
        angle = rng.uniform(0.0, np.pi)
        dx, dy = xx - center[0], yy - center[1]
        u = dx * np.cos(angle) + dy * np.sin(angle)
        v = -dx * np.sin(angle) + dy * np.cos(angle)
        inside = (u / axes[0]) ** 2 + (v / axes[1]) ** 2 <= 1.0
        image[inside] = levels[i]
    return image


def _blocks(n: int, rng: np.random.Generator) -> np.ndarray:
    image = np.zeros((n, n))
    lo, hi = max(n // 8, 1), max(n // 2, 2)
    for _ in range(int(rng.integers(3, 9))):
        h, w = int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))
        r0, c0 = int(rng.integers(0, n - h + 1)), int(rng.integers(0, n - w + 1))
        image[r0:r0 + h, c0:c0 + w] = rng.uniform(0.1, 1.0)
    return image


# ---------------------------------------------------------------------- masks

def make_mask(n: int, acceleration: float, center_fraction: float, seed: int) -> Mask:
    """Cartesian row mask: a fully sampled low-frequency band plus random rows.

    Rows are chosen in centred (fftshifted) frequency order and stored in the
    unshifted layout the FFT uses.
    """
    if not acceleration >= 1.0:
        raise ValidationError(f"acceleration must be >= 1, got {acceleration}")
    if not 0.0 <= center_fraction < 1.0:
        raise ValidationError(f"center_fraction must be in [0, 1), got {center_fraction}")
    n_center = int(math.ceil(n * center_fraction))
    total = max(round_half_up(n / acceleration), 1)
    if n_center > total:
        raise ValidationError(
            f"{n_center} centre rows exceed the budget of {total} rows",
            details={"n": n, "acceleration": acceleration, "center_fraction": center_fraction},
        )
    start = n // 2 - n_center // 2
    centre_rows = np.arange(start, start + n_center)
    others = np.setdiff1d(np.arange(n), centre_rows)
    rng = derive_rng(seed, "mask")
    random_rows = rng.choice(others, size=total - n_center, replace=False)

    shifted = np.zeros(n, dtype=bool)
    shifted[centre_rows] = True
    shifted[random_rows] = True
    rows = np.fft.ifftshift(shifted)
    keep = np.repeat(rows[:, None], n, axis=1)
    return Mask(keep, acceleration=float(acceleration))


def perturb_mask(
    m: Mask,
    flip_fraction: float,
    seed: int,
    granularity: FlipGranularity = FlipGranularity.ROWS,
) -> Mask:
    """Toggle round(flip_fraction · units) rows (or entries) chosen without replacement.

    The toggled units depend only on the seed, so perturbing twice with the same
    seed restores the original mask.
    """
    if not 0.0 <= flip_fraction <= 1.0:
        raise ValidationError(f"flip_fraction must be in [0, 1], got {flip_fraction}")
    granularity = FlipGranularity(granularity)
    rng = derive_rng(seed, "flip", granularity.value)
    keep = m.keep.copy()
    if granularity == FlipGranularity.ROWS:
        rows = m.rows
        k = round_half_up(flip_fraction * m.n)
        picked = rng.choice(m.n, size=k, replace=False)
        rows[picked] = ~rows[picked]
        keep = np.repeat(rows[:, None], m.n, axis=1)
    else:
        flat = keep.reshape(-1)
        k = round_half_up(flip_fraction * flat.size)
        picked = rng.choice(flat.size, size=k, replace=False)
        flat[picked] = ~flat[picked]
        keep = flat.reshape(m.keep.shape)
    if not keep.any():
        raise ValidationError(
            "mask perturbation would remove every sample",
            details={"flip_fraction": flip_fraction, "flipped": int(k)},
        )
    return Mask(keep, acceleration=m.acceleration)


# ---------------------------------------------------------------------- noise

def simulate_measurement(x: Image, fm: ForwardModel, nc: NoiseConfig, seed: int) -> Measurement:
    """y = A(x) corrupted by the configured noise"""
    if x.data.shape != fm.domain_shape:
        raise ValidationError(f"image shape {x.data.shape} does not match model domain {fm.domain_shape}")
    flux = nc.poisson_photon_flux
    if flux is not None and not flux > 0:
        raise ValidationError(f"photon flux must be > 0, got {flux}")
    if flux is not None and fm.kind != OperatorKind.RADON:
        raise ValidationError("photon-count noise applies to Radon measurements only")

    clean = fm.forward_real(x.data)
    if nc.noiseless:
        return fm.measurement(clean)

    rng = derive_rng(seed, "noise", fm.kind.value)
    noisy = clean
    if flux is not None:
        counts = rng.poisson(flux * np.exp(-clean))
        noisy = -np.log(np.maximum(counts, 1) / flux)
    if nc.gaussian_sigma > 0:
        noise = nc.gaussian_sigma * rng.standard_normal(clean.shape)
        if isinstance(fm, FourierModel):
            noise = noise * fm.mask.keep
        noisy = noisy + noise
    return fm.measurement(noisy)


# -------------------------------------------------------------------- datasets

Pair = Tuple[Measurement, Image]


@dataclass
class Dataset:
    """Unpaired measurements (P), clean images (Q) and the paired/validation splits"""

    unpaired_measurements: List[Measurement]
    clean_images: List[Image]
    paired: List[Pair]
    fm_train: ForwardModel
    fm_test: ForwardModel
    meta: DatasetMeta
    validation: List[Pair] = field(default_factory=list)


def _check_models(fm_train: ForwardModel, fm_test: ForwardModel) -> None:
    if fm_train.kind != fm_test.kind:
        raise ValidationError(
            f"train model is {fm_train.kind.value} but test model is {fm_test.kind.value}"
        )
    if fm_train.domain_shape != fm_test.domain_shape or fm_train.range_shape != fm_test.range_shape:
        raise ValidationError("train and test models must share domain and range shapes")


def _encode_mask(mask: Mask) -> str:
    return np.packbits(mask.keep.reshape(-1)).tobytes().hex()


def _decode_mask(bits: str, n: int, acceleration: float) -> Mask:
    try:
        packed = np.frombuffer(bytes.fromhex(bits), dtype=np.uint8)
    except ValueError as e:
        raise DatasetFormatError(f"mask bits are not valid hex: {e}")
    flat = np.unpackbits(packed)[: n * n]
    if flat.size != n * n:
        raise DatasetFormatError(f"mask bits hold {flat.size} entries, expected {n * n}")
    return Mask(flat.reshape(n, n).astype(bool), acceleration=acceleration)


def _meta_for(
    fm_train: ForwardModel,
    fm_test: ForwardModel,
    nc: NoiseConfig,
    seed: int,
    phantom: PhantomKind,
    counts: Tuple[int, int, int, int],
) -> DatasetMeta:
    extra = {}
    if isinstance(fm_train, FourierModel):
        extra = {
            "train_mask_bits": _encode_mask(fm_train.mask),
            "test_mask_bits": _encode_mask(fm_test.mask),
            "acceleration": fm_train.mask.acceleration,
        }
    elif isinstance(fm_train, RadonModel):
        extra = {"n_angles": len(fm_train.angles), "n_detectors": fm_train.n_detectors}
    return DatasetMeta(
        operator=fm_train.kind,
        n=fm_train.n,
        phantom=phantom,
        seed=seed,
        noise=nc,
        n_unpaired=counts[0],
        n_clean=counts[1],
        n_paired=counts[2],
        n_val=counts[3],
        **extra,
    )


def _draw(tag: str, index: int, seed: int, phantom: PhantomKind, n: int) -> Image:
    return make_phantom(phantom, n, stream_key(seed, tag, "image", index))


def build_dataset(
    n_unpaired_P: int,
    n_Q: int,
    n_paired: int,
    fm_train: ForwardModel,
    fm_test: ForwardModel,
    nc: NoiseConfig,
    seed: int,
    n_val: int = 0,
    phantom: PhantomKind = PhantomKind.ELLIPSES,
) -> Dataset:
    """Assemble the unpaired and paired training data.

    P is simulated through the prospective model fm_test, the paired and
    validation subsets through the retrospective model fm_train; Q holds
    independent clean phantoms. Each subset draws from its own stream.
    """
    for name, count in (("n_unpaired_P", n_unpaired_P), ("n_Q", n_Q), ("n_paired", n_paired), ("n_val", n_val)):
        if count < 0:
            raise ValidationError(f"{name} must be >= 0, got {count}")
    _check_models(fm_train, fm_test)
    phantom = PhantomKind(phantom)
    n = fm_train.n

    def simulate(tag: str, index: int, fm: ForwardModel) -> Pair:
        x = _draw(tag, index, seed, phantom, n)
        y = simulate_measurement(x, fm, nc, stream_key(seed, tag, "noise", index))
        return y, x

    unpaired = [simulate("P", i, fm_test)[0] for i in range(n_unpaired_P)]
    clean = [_draw("Q", i, seed, phantom, n) for i in range(n_Q)]
    paired = [simulate("paired", i, fm_train) for i in range(n_paired)]
    validation = [simulate("validation", i, fm_test) for i in range(n_val)]

    meta = _meta_for(fm_train, fm_test, nc, seed, phantom, (n_unpaired_P, n_Q, n_paired, n_val))
    logger.info(
        "built dataset",
        operator=fm_train.kind.value,
        n=n,
        unpaired=n_unpaired_P,
        clean=n_Q,
        paired=n_paired,
        validation=n_val,
        seed=seed,
    )
    return Dataset(
        unpaired_measurements=unpaired,
        clean_images=clean,
        paired=paired,
        fm_train=fm_train,
        fm_test=fm_test,
        meta=meta,
        validation=validation,
    )


def forward_models(cfg: DataConfig) -> Tuple[ForwardModel, ForwardModel]:
    """Retrospective (train) and prospective (test) models for a data recipe"""
    if cfg.operator == OperatorKind.FOURIER:
        train_mask = make_mask(cfg.n, cfg.acceleration, cfg.center_fraction, stream_key(cfg.seed, "train_mask"))
        test_mask = perturb_mask(
            train_mask, cfg.flip_fraction, stream_key(cfg.seed, "test_mask"), cfg.flip_granularity
        )
        return FourierModel(train_mask), FourierModel(test_mask)
    if cfg.operator == OperatorKind.RADON:
        fm = radon_build(cfg.n, cfg.radon.n_angles, cfg.radon.detectors_for(cfg.n))
        return fm, fm
    fm = IdentityModel(cfg.n)
    return fm, fm


def dataset_from_config(cfg: DataConfig) -> Dataset:
    fm_train, fm_test = forward_models(cfg)
    return build_dataset(
        cfg.n_unpaired,
        cfg.n_clean,
        cfg.n_paired,
        fm_train,
        fm_test,
        cfg.noise,
        cfg.seed,
        n_val=cfg.n_val,
        phantom=cfg.phantom,
    )


def models_from_meta(meta: DatasetMeta) -> Tuple[ForwardModel, ForwardModel]:
    if meta.operator == OperatorKind.FOURIER:
        if meta.train_mask_bits is None or meta.test_mask_bits is None:
            raise DatasetFormatError("Fourier dataset meta lacks mask bits")
        train = _decode_mask(meta.train_mask_bits, meta.n, meta.acceleration)
        test = _decode_mask(meta.test_mask_bits, meta.n, meta.acceleration)
        return FourierModel(train), FourierModel(test)
    if meta.operator == OperatorKind.RADON:
        if meta.n_angles is None:
            raise DatasetFormatError("Radon dataset meta lacks n_angles")
        fm = radon_build(meta.n, meta.n_angles, meta.n_detectors)
        return fm, fm
    fm = IdentityModel(meta.n)
    return fm, fm


def replay_dataset(meta: DatasetMeta) -> Dataset:
    """Regenerate a dataset from its meta document alone"""
    fm_train, fm_test = models_from_meta(meta)
    return build_dataset(
        meta.n_unpaired,
        meta.n_clean,
        meta.n_paired,
        fm_train,
        fm_test,
        meta.noise,
        meta.seed,
        n_val=meta.n_val,
        phantom=meta.phantom,
    )


# --------------------------------------------------------------- serialization

def save_dataset(dataset: Dataset, directory: Union[str, Path]) -> Path:
    """Write meta.json plus one raw array per sample.

    Layout: unpaired/y_#####.bin, clean/x_#####.bin, and paired/ and
    validation/ holding y_#####.bin next to x_#####.bin. Measurements use the
    real range layout.
    """
    root = Path(directory)
    for sub in ("unpaired", "clean", "paired", "validation"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / META_FILE).write_text(dataset.meta.model_dump_json(indent=2), encoding="utf-8")
    for i, y in enumerate(dataset.unpaired_measurements):
        write_raw(root / "unpaired" / f"y_{i:05d}.bin", y.to_real())
    for i, x in enumerate(dataset.clean_images):
        write_raw(root / "clean" / f"x_{i:05d}.bin", x.data)
    for sub, pairs in (("paired", dataset.paired), ("validation", dataset.validation)):
        for i, (y, x) in enumerate(pairs):
            write_raw(root / sub / f"y_{i:05d}.bin", y.to_real())
            write_raw(root / sub / f"x_{i:05d}.bin", x.data)
    logger.info("saved dataset", directory=str(root))
    return root


def read_meta(directory: Union[str, Path]) -> DatasetMeta:
    path = Path(directory) / META_FILE
    if not path.exists():
        raise DatasetFormatError(f"no {META_FILE} in {directory}")
    try:
        return DatasetMeta.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValueError) as e:
        raise DatasetFormatError(f"invalid dataset meta {path}: {e}")


def load_dataset(directory: Union[str, Path]) -> Dataset:
    root = Path(directory)
    meta = read_meta(root)
    fm_train, fm_test = models_from_meta(meta)

    def measurement(path: Path, fm: ForwardModel) -> Measurement:
        arr = read_raw(path)
        if arr.shape != fm.range_shape:
            raise DatasetFormatError(f"{path}: shape {arr.shape}, expected {fm.range_shape}")
        return fm.measurement(arr)

    def image(path: Path) -> Image:
        arr = read_raw(path)
        if arr.shape != fm_train.domain_shape:
            raise DatasetFormatError(f"{path}: shape {arr.shape}, expected {fm_train.domain_shape}")
        return Image(arr)

    def pairs(sub: str, count: int, fm: ForwardModel) -> List[Pair]:
        return [
            (measurement(root / sub / f"y_{i:05d}.bin", fm), image(root / sub / f"x_{i:05d}.bin"))
            for i in range(count)
        ]

    return Dataset(
        unpaired_measurements=[
            measurement(root / "unpaired" / f"y_{i:05d}.bin", fm_test) for i in range(meta.n_unpaired)
        ],
        clean_images=[image(root / "clean" / f"x_{i:05d}.bin") for i in range(meta.n_clean)],
        paired=pairs("paired", meta.n_paired, fm_train),
        fm_train=fm_train,
        fm_test=fm_test,
        meta=meta,
        validation=pairs("validation", meta.n_val, fm_test),
    )


def stack_measurements(measurements: List[Measurement]) -> np.ndarray:
    """(B, *range_shape) real batch"""
    return np.stack([y.to_real() for y in measurements], axis=0)


def stack_images(images: List[Image]) -> np.ndarray:
    """(B, 1, n, n) channel-first batch"""
    return np.stack([x.data for x in images], axis=0)[:, None, :, :]

