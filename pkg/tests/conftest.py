import math

import pytest

from grazing.model import HybridSystem, ImpactOscillator, a_graz

ZETA, EPS, OMEGA = 0.02, 0.9, 0.854


@pytest.fixture(scope="session")
def osc():
    return ImpactOscillator.create(ZETA, EPS, OMEGA)


def make_generic(zeta=ZETA, omega_ref=OMEGA, psi=0.05):
    """The oscillator's field with a velocity-dependent restitution and a phase shift."""

    def field(x, y, z, mu, eta):
        amp = a_graz(omega_ref + eta, zeta) + mu
        return -2.0 * zeta * y - x - 1.0 + amp * math.cos(z)

    return HybridSystem(field, lambda y, z, mu, eta: 0.8 + 0.1 * y,
                        lambda y, z, mu, eta: psi, lambda mu, eta: omega_ref + eta,
                        extension_halfwidth=5.0, name="generic test instance")


@pytest.fixture(scope="session")
def generic():
    return make_generic()


# -- expensive continuation results shared by several test modules -----------------------

@pytest.fixture(scope="session")
def branches(osc):
    """Branches born at grazing at the reference frequency, keyed by loop count."""
    from grazing.continuation import branch_from_grazing
    return {p: branch_from_grazing(p, osc) for p in (2, 3)}


@pytest.fixture(scope="session")
def resonant(osc):
    """``find_resonant_grazing`` results keyed by ``(p, n)``, computed on demand."""
    from grazing.continuation import find_resonant_grazing
    cache = {}

    def get(p, n):
        if (p, n) not in cache:
            cache[p, n] = find_resonant_grazing(p, n, osc)
        return cache[p, n]

    return get


@pytest.fixture(scope="session")
def curves(resonant):
    """Continued SN/PD curves keyed by ``(kind, p, n)``, computed on demand."""
    from grazing.continuation import continue_curve
    cache = {}

    def get(kind, p, n):
        if (kind, p, n) not in cache:
            rg = resonant(p, n)
            seed = rg.sn_seed if kind == "SN" else rg.pd_seed
            cache[kind, p, n] = continue_curve(kind, p, seed, rg.sys)
        return cache[kind, p, n]

    return get
