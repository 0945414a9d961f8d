import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_dataset():
    from pacgan import synthdata

    return synthdata.generate_dataset(n_identities=4, n_poses_per_identity=2, n_skeletons=3, seed=3)
