import datetime as dt

import numpy as np
import pytest

import chimeric.kernels
from chimeric.core import CASE_LEVELS, QuantileForecast, QuantileLevelSet, Target


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the JIT kernels once so timed tests measure hot execution."""
    chimeric.kernels.warm_up()


@pytest.fixture
def rng():
    return np.random.default_rng(20210111)


def make_target(variable="incident-cases", location="US", end="2021-01-23", horizon=2):
    return Target(variable, location, dt.date.fromisoformat(end), horizon)


def make_forecast(model_id, values, target=None, levels=CASE_LEVELS, provenance="computational"):
    return QuantileForecast(
        model_id=model_id,
        target=target if target is not None else make_target(),
        levels=levels if isinstance(levels, QuantileLevelSet) else QuantileLevelSet(levels),
        values=values,
        provenance=provenance,
    )


def random_case_matrix(rng, n_models=4, n_targets=3, scale=100.0):
    """Fully present random case-level matrix plus matching truths."""
    from chimeric.core import TruthSet, assemble_matrices

    targets = [
        make_target(end=(dt.date(2021, 1, 23) + dt.timedelta(weeks=i)).isoformat())
        for i in range(n_targets)
    ]
    forecasts = []
    for m in range(n_models):
        for t in targets:
            values = np.sort(rng.random(7)) * scale
            forecasts.append(make_forecast(f"m{m}", values, target=t))
    truths = TruthSet({t: float(rng.random() * scale) for t in targets})
    return assemble_matrices(forecasts, truths)
