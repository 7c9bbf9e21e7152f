from .checkpoint import (
    CHECKPOINT_VERSION,
    load_checkpoint,
    load_discriminator,
    save_checkpoint,
)
from .discriminator import Discriminator, build_discriminator, disc_forward
from .network import (
    FULL,
    SHARED_ONLY,
    HeteroModalNet,
    NetworkConfig,
    build_network,
    copy_shared_into_full_branch,
    forward,
    sample_tensors,
)

__all__ = [
    "CHECKPOINT_VERSION",
    "Discriminator",
    "FULL",
    "HeteroModalNet",
    "NetworkConfig",
    "SHARED_ONLY",
    "build_discriminator",
    "build_network",
    "copy_shared_into_full_branch",
    "disc_forward",
    "forward",
    "load_checkpoint",
    "load_discriminator",
    "sample_tensors",
    "save_checkpoint",
]
