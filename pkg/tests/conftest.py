import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

from diskns.diskbasis import DomainSpec, build_basis
from diskns.galerkin import make_operator


@pytest.fixture(scope="session")
def basis8():
    return build_basis(8, DomainSpec(alpha=2.0))


@pytest.fixture(scope="session")
def basis16():
    return build_basis(16, DomainSpec(alpha=2.0))


@pytest.fixture(scope="session")
def basis32():
    return build_basis(32, DomainSpec(alpha=2.0))


@pytest.fixture(scope="session")
def basis64():
    return build_basis(64, DomainSpec(alpha=2.0))


@pytest.fixture(scope="session")
def basis16_alpha1():
    return build_basis(16, DomainSpec(alpha=1.0))


@pytest.fixture(scope="session")
def op16(basis16):
    return make_operator(basis16)


@pytest.fixture(scope="session")
def op32(basis32):
    return make_operator(basis32)
