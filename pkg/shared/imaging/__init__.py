from .operators import (
    FourierModel,
    ForwardModel,
    IdentityModel,
    Image,
    Mask,
    Measurement,
    RadonModel,
    adjoint,
    adjoint_tensor,
    adjoint_test,
    apply,
    forward_tensor,
    fourier_adjoint,
    fourier_apply,
    fourier_from_mask,
    radon_build,
)
from .synthdata import (
    Dataset,
    build_dataset,
    dataset_from_config,
    forward_models,
    load_dataset,
    make_mask,
    make_phantom,
    perturb_mask,
    replay_dataset,
    save_dataset,
    simulate_measurement,
)

__all__ = [
    "FourierModel",
    "ForwardModel",
    "IdentityModel",
    "Image",
    "Mask",
    "Measurement",
    "RadonModel",
    "adjoint",
    "adjoint_tensor",
    "adjoint_test",
    "apply",
    "forward_tensor",
    "fourier_adjoint",
    "fourier_apply",
    "fourier_from_mask",
    "radon_build",
    "Dataset",
    "build_dataset",
    "dataset_from_config",
    "forward_models",
    "load_dataset",
    "make_mask",
    "make_phantom",
    "perturb_mask",
    "replay_dataset",
    "save_dataset",
    "simulate_measurement",
]
