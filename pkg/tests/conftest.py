import numpy as np
import pytest

from speclab.operator import BoxDomain, SingleSite, sample_disorder, single_site_family


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def desk_domain():
    return BoxDomain(d=1, L=4, m=8)


@pytest.fixture
def desk_family(desk_domain):
    """Single-site family on the desk grid, other couplings pinned at one draw."""
    site = SingleSite.characteristic(1.0, desk_domain)
    real = sample_disorder("uniform", desk_domain, 7, 0)
    return single_site_family(desk_domain, site, real, (0,))


def normalized(rng, n, volume_element):
    phi = rng.standard_normal(n)
    return phi / np.sqrt(volume_element * float(phi @ phi))
