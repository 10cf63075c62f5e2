import os
from pathlib import Path

import numpy as np
import pytest

from fatiguelife import models
from fatiguelife.models import ModelKind

# Reference parameter sets used across the suite.
IA = (7.38, -2.01, 35.04, 0.5628, 0.5274)
IB = (6.72, -1.57, 36.21, 0.5510, 4.55, -2.89)
IIA = (6.53, -1.51, 1.58, 0.0473, 0.4888, 0.1447)
IIB = (6.51, -1.47, 1.60, 0.0385, 0.4886, 0.0852)
IIC = (6.43, -1.44, 1.58, 0.0408, 0.4923, 2.68, -1.97)
IID = (6.49, -1.46, 1.60, 0.0366, 0.4904, 0.66, -0.94)
PARAMS = {ModelKind.Ia: IA, ModelKind.Ib: IB, ModelKind.IIa: IIA, ModelKind.IIb: IIB,
          ModelKind.IIc: IIC, ModelKind.IId: IID}

DATA_ENV = "FATIGUELIFE_DATA"


def design(n, seed=0, lo=30.0, hi=80.0):
    rng = np.random.default_rng(seed)
    return list(zip(rng.uniform(lo, hi, n), rng.choice([-1.0, 0.0, 0.5], n)))


@pytest.fixture(scope="session")
def ia_data():
    return models.simulate(ModelKind.Ia, IA, design(85, 11), 1e7, rng=12)


@pytest.fixture(scope="session")
def iib_data():
    return models.simulate(ModelKind.IIb, IIB, design(85, 21), 1e7, rng=22)


@pytest.fixture(scope="session")
def reference_data():
    """The 75S-T6 file named by FATIGUELIFE_DATA; tests skip when unset."""
    path = os.environ.get(DATA_ENV)
    if not path or not Path(path).is_file():
        pytest.skip(f"set {DATA_ENV} to the 75S-T6 CSV to run dataset-conditional checks")
    from fatiguelife.dataset import load_csv
    return load_csv(path)


# Acceptance outcomes, printed one line per criterion after the run.
CRITERIA_RESULTS = {}


def record_criterion(number, passed, detail):
    status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
    CRITERIA_RESULTS[number] = f"criterion {number:>2}: {status}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA_RESULTS):
        terminalreporter.write_line(CRITERIA_RESULTS[n])
