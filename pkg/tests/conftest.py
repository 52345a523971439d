from __future__ import annotations

import numpy as np
import pytest

from ground3d import load_proposals, load_scene_bundle
from ground3d.synthetic import build_cube_bundle, build_room_bundle


def pytest_addoption(parser):
    parser.addoption(
        "--regen-goldens",
        action="store_true",
        default=False,
        help="rewrite golden prompt/image files instead of comparing",
    )


@pytest.fixture(scope="session")
def regen_goldens(request):
    return request.config.getoption("--regen-goldens")


@pytest.fixture(scope="session")
def cube_bundle(tmp_path_factory):
    return build_cube_bundle(tmp_path_factory.mktemp("bundles") / "cube0")


@pytest.fixture(scope="session")
def cube_scene(cube_bundle):
    return load_scene_bundle(cube_bundle)


@pytest.fixture(scope="session")
def cube_proposals(cube_bundle, cube_scene):
    return load_proposals(cube_bundle / "proposals.json", cube_scene)


@pytest.fixture(scope="session")
def room_bundle(tmp_path_factory):
    return build_room_bundle(tmp_path_factory.mktemp("bundles") / "room0")


@pytest.fixture(scope="session")
def room_scene(room_bundle):
    return load_scene_bundle(room_bundle)


@pytest.fixture(scope="session")
def room_proposals(room_bundle, room_scene):
    return load_proposals(room_bundle / "proposals.json", room_scene)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def e2e_world(tmp_path_factory):
    from .e2ekit import E2EWorld

    root = tmp_path_factory.mktemp("e2e")
    return E2EWorld(root / "scenes" / "room0", root / "fixtures")


# One PASS/FAIL line per acceptance criterion at the end of the run.
_CRITERIA: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if name.startswith("test_criterion_"):
        _CRITERIA[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        terminalreporter.write_line(f"{_CRITERIA[name]}  {name}")
