import os

import numpy as np
import pytest

from distillbound import dataio


@pytest.fixture(scope="session")
def digits_idx(tmp_path_factory):
    """Paths to idx-format digit files.

    Honors DISTILLBOUND_MNIST_DIR when it holds train-images-idx3-ubyte /
    train-labels-idx1-ubyte; otherwise exports the bundled 8x8 digits
    (1797 samples) to real idx files so every loader path is exercised.
    """
    override = os.environ.get("DISTILLBOUND_MNIST_DIR")
    if override:
        images = os.path.join(override, "train-images-idx3-ubyte")
        labels = os.path.join(override, "train-labels-idx1-ubyte")
        if os.path.exists(images) and os.path.exists(labels):
            return images, labels
    from sklearn.datasets import load_digits
    bunch = load_digits()
    root = tmp_path_factory.mktemp("digits")
    images = str(root / "train-images-idx3-ubyte")
    labels = str(root / "train-labels-idx1-ubyte")
    dataio.write_idx_images(images, bunch.images.astype(np.uint8))
    dataio.write_idx_labels(labels, bunch.target.astype(np.uint8))
    return images, labels


@pytest.fixture
def small_ds():
    spec = dataio.SynthSpec(n=12, d=6, target_half_margin=0.2,
                            direction_seed=3, sample_seed=3)
    return dataio.generate_synthetic(spec)
