import numpy as np
import pytest

from tdimaging.scene import IncidenceSet, Inclusion, Materials, Scene, TrialInclusion

LAM = 2.0 * np.pi
Z_D = np.array([0.3, -0.4, 0.2]) * LAM


def make_scene(kind="permeable", n=50, nodes=800, radius=5.0, rho=0.01, center=Z_D, trial_sign=1):
    if kind == "permeable":
        m = Materials(mu1=2.0, mu2=2.0)
    elif kind == "dielectric":
        m = Materials(eps1=2.0, eps2=2.0)
    elif kind == "zero":
        m = Materials(mu2=2.0)
    else:
        raise ValueError(kind)
    trial = TrialInclusion.sphere(m)
    if trial_sign < 0:
        # mu2 chosen so that a_mu changes sign; M_S is kept so the map should negate
        flipped = Materials(mu1=m.mu1, mu2=1.0 / (2.0 - 1.0 / m.mu2), eps1=m.eps1, eps2=m.eps2)
        trial = TrialInclusion(flipped, trial.m_mu, trial.m_eps)
    return Scene(m, Inclusion.sphere(m, center, rho), trial, radius * LAM, nodes,
                 IncidenceSet.fibonacci(n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
