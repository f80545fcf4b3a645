import pytest

from src.models.scenario import ScenarioConfig
from src.modules.petrophysics import (
    CP_TO_PA_S,
    GRAVITY,
    MD_TO_M2,
    PSI_TO_PA,
    FluidProperties,
    fracture_region,
    matrix_region,
)


@pytest.fixture(scope="session")
def plot_fluids():
    """Unit viscosities and no gravity: pressures read directly in psi."""
    return FluidProperties(viscosity_w=1.0, viscosity_n=1.0, density_w=1000.0, density_n=800.0, gravity=0.0)


@pytest.fixture(scope="session")
def plot_matrix(plot_fluids):
    return matrix_region(2, 3.0, 4.0, 15.0, -15.0, 0.2, 1.0, plot_fluids)


@pytest.fixture(scope="session")
def plot_fracture(plot_fluids):
    return fracture_region(1, 0.1, 0.2, 1.0, plot_fluids)


@pytest.fixture(scope="session")
def si_fluids():
    return FluidProperties(
        viscosity_w=1.0 * CP_TO_PA_S,
        viscosity_n=1.0 * CP_TO_PA_S,
        density_w=1000.0,
        density_n=800.0,
        gravity=GRAVITY,
    )


@pytest.fixture(scope="session")
def si_matrix(si_fluids):
    return matrix_region(
        2, 3.0 * PSI_TO_PA, 4.0, 15.0 * PSI_TO_PA, -15.0 * PSI_TO_PA, 0.2, 1.0 * MD_TO_M2, si_fluids
    )


@pytest.fixture(scope="session")
def si_fracture(si_fluids):
    return fracture_region(1, 0.1 * PSI_TO_PA, 0.2, 1.0e5 * MD_TO_M2, si_fluids)


@pytest.fixture
def small_spontaneous():
    """Single matrix cell, coarse sampling: a run of a few seconds."""
    return ScenarioConfig.model_validate(
        {
            "scenario": {"name": "small", "kind": "spontaneous", "scheme": "ihu-c"},
            "grid": {"n_matrix": 1},
            "fluids": {"gravity": False},
            "time": {
                "end": 1.0,
                "report": [0.08, 0.8],
                "n_samples": 20,
                "first_sample": 1.0e-3,
                "dt_init": 1.0e-4,
                "dt_max": 0.05,
            },
            "output": {"progress": False},
        }
    )


@pytest.fixture
def small_forced():
    return ScenarioConfig.model_validate(
        {
            "scenario": {"name": "small-forced", "kind": "forced", "scheme": "ihu-c"},
            "grid": {"n_matrix": 2, "tilt_deg": 15.0, "fracture_pv_multiplier": 1.0},
            "time": {
                "end": 0.2,
                "report": [0.1, 0.2],
                "n_samples": 10,
                "first_sample": 1.0e-2,
                "dt_init": 1.0e-4,
                "dt_max": 1.0e-2,
            },
            "output": {"progress": False},
        }
    )
