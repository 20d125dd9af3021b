import sys
from pathlib import Path

import pytest

# Add src directory to Python path for imports
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from mechanics.dynamics import IntegratorConfig, PhaseState  # noqa: E402
from parsers.system_file_parser import load_system_file, parse_system_file  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
SYSTEMS = FIXTURES / "systems"
INPUTS = FIXTURES / "inputs"
GOLDEN = FIXTURES / "golden"


def pytest_addoption(parser):
    parser.addoption(
        "--update-golden",
        action="store_true",
        default=False,
        help="Rewrite golden files instead of comparing against them",
    )


@pytest.fixture
def system_path():
    """Path of an example system file by name"""
    return lambda name: SYSTEMS / f"{name}.rms"


@pytest.fixture
def load_system():
    """Parse an example system from tests/fixtures/systems"""
    return lambda name: load_system_file(SYSTEMS / f"{name}.rms")


@pytest.fixture
def make_system():
    """Parse a system from inline text"""
    return lambda text, source="<string>": parse_system_file(text, source)


@pytest.fixture
def state():
    return lambda system, q, v=None, t=0.0: PhaseState.create(
        system, q, v if v is not None else [0.0] * system.n, t
    )


@pytest.fixture
def rk4():
    """Fixed-step RK4 config over [t0, t1]"""
    return lambda t1, dt=1e-3, t0=0.0: IntegratorConfig(t0=t0, t1=t1, method="rk4", dt=dt)


@pytest.fixture
def flat_line(load_system):
    return load_system("flat_line")


@pytest.fixture
def oscillator(load_system):
    return load_system("oscillator")


@pytest.fixture
def sphere(load_system):
    return load_system("sphere")


@pytest.fixture
def polar(load_system):
    return load_system("polar")


@pytest.fixture
def pendulum(load_system):
    return load_system("pendulum")


@pytest.fixture
def knife_edge(load_system):
    return load_system("knife_edge")


@pytest.fixture
def freefall(load_system):
    return load_system("freefall")


@pytest.fixture
def golden(request):
    """Compare text against tests/fixtures/golden/<name>, or rewrite it with --update-golden"""
    update = request.config.getoption("--update-golden")

    def check(name, text):
        path = GOLDEN / name
        if update:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            return
        if not path.exists():
            pytest.fail(f"missing golden file {name}; run pytest --update-golden to create it")
        assert text == path.read_text(encoding="utf-8")

    check.update = update
    return check
