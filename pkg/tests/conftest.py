import numpy as np
import pytest

from splitkit import PAPER_MATRIX, Diffeo, Line1, Plane2
from splitkit.dynamics import ShearPerturbation, ToralAutomorphism
from splitkit.frames import plane_from_coefficients

# Spectrum of the built-in example matrix, from the eigen-decomposition
# oracle (numpy.linalg.eig on the integer matrix), sorted by magnitude.
EIG_BY_MAG = (-0.1001003012, -3.1110390521, 3.2111393533)

# Per-step ratios of eigenvalue magnitudes (oracle values).
RATE_DYN = 0.9688271700
RATE_VOL = 0.0969798915
RATE_BUNCH = 3.0140591605

# Flat-metric k=1 ratios on the true slow plane / fast line (oracle values).
FLAT_DYN_1 = 0.9933186612
FLAT_VOL_1 = 0.0969798915
FLAT_BUNCH_1 = 3.1683732798

# Flat-metric singular values of the restriction to the slow eigenplane.
RESTRICTED_SV_SLOW = (0.0976322054, 3.1896846434)
DET_SLOW = 0.3114159462  # |r1 * r2|

# Graph coefficients of the slow eigenplane (normal via eigenvector cross).
SLOW_PLANE_COEFFS = (0.1329335525, 0.8256688194)

# Shear used in all perturbed-map tests: support cylinder well away from the
# binary-exact fixed points below.
SHEAR = dict(axis=0, center=(0.0, 0.5, 0.5), radius=0.2, amplitude=0.05)

# Fixed points of the example matrix that are exactly representable in binary
# floating point: their numerical orbits are exactly periodic, so deep
# cocycles along them are free of roundoff drift (which otherwise grows with
# the expansion rate and randomizes the tail of the orbit).
FIXED_EXACT = (np.zeros(3), np.array([0.5, 0.0, 0.5]))


@pytest.fixture(scope="session")
def phi_linear():
    return Diffeo.from_matrix(PAPER_MATRIX)


@pytest.fixture(scope="session")
def phi_perturbed():
    shear = ShearPerturbation(**SHEAR)
    return Diffeo((shear, ToralAutomorphism(PAPER_MATRIX)))


@pytest.fixture(scope="session")
def eigen_oracle():
    """Live eigen-decomposition of the example matrix, sorted by |eigenvalue|."""
    w, V = np.linalg.eig(PAPER_MATRIX.astype(float))
    order = np.argsort(np.abs(w))
    return w[order].real, V[:, order].real


@pytest.fixture(scope="session")
def slow_plane(eigen_oracle) -> Plane2:
    _, V = eigen_oracle
    return Plane2.spanned_by(V[:, 0], V[:, 1])


@pytest.fixture(scope="session")
def fast_line(eigen_oracle) -> Line1:
    _, V = eigen_oracle
    return Line1(V[:, 2])


def tilt_plane_field(p):
    """Smooth periodic non-involutive initial plane field: a=0, b=0.1 sin(2 pi x1).

    Its bracket coefficient is 0.2 pi cos(2 pi x1), nonzero away from two
    circles, which makes pullback-bracket decay measurable (the coordinate
    plane is involutive, and pullbacks of involutive fields stay involutive).
    """
    return plane_from_coefficients(0.0, 0.1 * np.sin(2.0 * np.pi * p[0]))


@pytest.fixture(scope="session")
def tilt_E0():
    return tilt_plane_field
