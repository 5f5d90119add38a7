import cmath
import math

import numpy as np
import pytest

from saw_qnm.qnm import find_modes
from saw_qnm.structure import StructureSpec, catalog_structure, segments_from_pairs

SLAB_N = 2.0
SLAB_L = 1e-6
SLAB_V0 = 3000.0


def slab_spec(n=SLAB_N, length=SLAB_L, v0=SLAB_V0, pad=0.3e-6):
    """A single index-n strip between two free-surface half-gaps."""
    return StructureSpec(segments_from_pairs([(pad, 1.0, "gap"), (length, n, "strip"), (pad, 1.0, "gap")]), v0=v0)


def slab_omega(k, n=SLAB_N, length=SLAB_L, v0=SLAB_V0):
    # Round trip r^2 exp(2 i w n L / v0) = 1 with r = (n - 1) / (n + 1).
    return v0 / (n * length) * (math.pi * k - 1j * math.log((n + 1) / (n - 1)))


def slab_band(kmax=5, n=SLAB_N, length=SLAB_L, v0=SLAB_V0):
    fsr = v0 / (2 * n * length)
    return 0.5 * fsr, (kmax + 0.5) * fsr


@pytest.fixture(scope="session")
def r9():
    return catalog_structure("R9")


@pytest.fixture(scope="session")
def r9_modes(r9):
    return find_modes(r9, (2.9e9, 3.3e9))


@pytest.fixture(scope="session")
def slab():
    return slab_spec()


@pytest.fixture(scope="session")
def slab_modes(slab):
    return find_modes(slab, slab_band())
