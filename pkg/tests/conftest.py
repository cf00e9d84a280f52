import numpy as np
import pytest

from flowrecon.geometry import DomainConfig, build_domain
from flowrecon.observation import build_voxels, riesz_representers
from flowrecon.spaces import SpaceTag, assemble_gram


@pytest.fixture(scope="session")
def domain():
    return build_domain()


@pytest.fixture(scope="session")
def small():
    """Coarse 32 x 16 version of the default geometry for solver-heavy tests."""
    return build_domain(DomainConfig(nx=32, ny=16))


@pytest.fixture(scope="session")
def channel():
    """Straight channel with a splitter touching the outlet edge, no stenosis."""
    return build_domain(DomainConfig(nx=32, ny=16, stenosis=None))


@pytest.fixture(scope="session")
def g_u(domain):
    return assemble_gram(domain, SpaceTag.VelocityH1)


@pytest.fixture(scope="session")
def g_up(domain):
    return assemble_gram(domain, SpaceTag.ProductUxP)


@pytest.fixture(scope="session")
def vox(domain):
    return build_voxels(domain)


@pytest.fixture(scope="session")
def W_u(vox, g_u):
    return riesz_representers(vox, g_u)


@pytest.fixture(scope="session")
def W_up(vox, g_up):
    return riesz_representers(vox, g_up)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""
    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {k:2d} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE[k] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
