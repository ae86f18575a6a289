import pytest

from conformgreen import BoundaryCurve, ConformalMetric, GreenFunction, build_domain


def pytest_addoption(parser):
    parser.addoption(
        "--SLOW",
        action="store_true",
        help="Run the acceptance-grade numerical experiments (fine meshes, many solves)",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-grade run, enabled with --SLOW")


def pytest_collection_modifyitems(config, items):
    if config.getoption("SLOW"):
        return
    skip = pytest.mark.skip(reason="needs --SLOW")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture()
def SLOW(pytestconfig):
    return pytestconfig.getoption("SLOW")


@pytest.fixture(scope="session")
def disk():
    return BoundaryCurve.disk()


@pytest.fixture(scope="session")
def disk_mesh(disk):
    return build_domain(disk, 0.1)


@pytest.fixture(scope="session")
def fine_disk_mesh(disk):
    return build_domain(disk, 0.05)


@pytest.fixture(scope="session")
def flat_metric(disk_mesh):
    return ConformalMetric.flat(disk_mesh)


@pytest.fixture(scope="session")
def fine_flat_metric(fine_disk_mesh):
    return ConformalMetric.flat(fine_disk_mesh)


@pytest.fixture(scope="session")
def fine_green(fine_flat_metric):
    return GreenFunction(fine_flat_metric)
