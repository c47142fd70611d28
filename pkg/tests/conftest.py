import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def random_image(rng):
    from puhdr.imgcore import LinearImage

    def make(h=8, w=8, lo=0.01, hi=4000.0):
        return LinearImage(np.exp(rng.uniform(np.log(lo), np.log(hi), (h, w, 3))))

    return make
