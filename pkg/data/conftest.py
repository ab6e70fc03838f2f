import os
import sys

import numpy as np
import pytest

# Test modules live in data/; the package modules sit at the repository root.
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from dynamics import RigidBodyModel  # noqa: E402
from scenario_loader import load_scenario  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def planar_space_model():
    return RigidBodyModel(kind="space_nonlinear", mass=16.8, inertia=[0.2, 0.2, 0.2], planar=True, name="space")


@pytest.fixture
def planar_underwater_model():
    return RigidBodyModel(
        kind="underwater",
        mass=28.0,
        inertia=[0.6, 0.6, 0.5],
        added_mass=[12.0, 12.0, 20.0, 0.2, 0.2, 0.25],
        d_lin=[15.0, 15.0, 20.0, 1.0, 1.0, 1.0],
        d_quad=[10.0, 10.0, 15.0, 1.0, 1.0, 1.0],
        planar=True,
        name="underwater",
    )


@pytest.fixture
def space_model():
    return RigidBodyModel(kind="space_nonlinear", mass=14.5, inertia=[0.3, 0.3, 0.3], name="space")


@pytest.fixture
def underwater_model():
    return RigidBodyModel(
        kind="underwater",
        mass=11.5,
        inertia=[0.16, 0.16, 0.16],
        added_mass=[5.5, 12.7, 14.57, 0.12, 0.12, 0.12],
        d_lin=[4.03, 6.22, 5.18, 0.07, 0.07, 0.07],
        d_quad=[18.18, 21.66, 36.99, 1.55, 1.55, 1.55],
        weight=112.8,
        buoyancy=114.8,
        r_b=[0.0, 0.0, 0.01],
        name="underwater",
    )


@pytest.fixture(scope="session")
def planar_scenario():
    return load_scenario("planar_inspection")


@pytest.fixture(scope="session")
def cubesat_scenario():
    return load_scenario("cubesat_inspection")


@pytest.fixture
def unreachable_scenario_path(tmp_path):
    """Planar scenario demanding more disturbance margin than any plan can carry."""
    import json

    import config

    with open(os.path.join(config.SCENARIO_DIR, "planar_inspection.json"), "r", encoding="utf-8") as f:
        document = json.load(f)
    document["planner"]["alpha_min"] = 100.0
    path = tmp_path / "unreachable.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return str(path)
