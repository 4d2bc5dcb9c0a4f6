import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small synthetic dataset shared by model/training tests."""
    from mmcl.data import SyntheticSpec, generate_synthetic

    return generate_synthetic(SyntheticSpec(size=64, seed=11))
