import numpy as np
import pytest

from parkdur import network as nn
from parkdur.dataset import fit_transform, holdout_split, load_synth_spec, synthesize
from parkdur.explain import TrainingStats

# Published OBP and MSP confusion matrices, rows observed, columns predicted.
TABLE4 = np.array([
    [116, 6, 1, 0, 0],
    [8, 60, 2, 0, 0],
    [5, 5, 53, 3, 0],
    [0, 0, 2, 110, 3],
    [0, 0, 0, 4, 104],
])
TABLE5 = np.array([
    [255, 25, 2, 0, 0],
    [9, 108, 3, 1, 0],
    [0, 5, 19, 1, 0],
    [0, 0, 0, 12, 0],
    [0, 0, 0, 0, 235],
])


@pytest.fixture(scope="session")
def obp_spec():
    return load_synth_spec("obp")


@pytest.fixture(scope="session")
def obp_records(obp_spec):
    return synthesize(obp_spec, obp_spec.seed)


@pytest.fixture(scope="session")
def desk_model(obp_spec, obp_records):
    """A single-configuration fit on synthetic OBP data with six rows held
    out, shared by the explanation tests."""
    keep, held = holdout_split(len(obp_records), 6, 7)
    train = [obp_records[i] for i in keep]
    dm = fit_transform(train, obp_spec.schema)
    net = nn.init(dm.data.shape[1], 4, 5, 0.0, seed=3)
    net = nn.train(net, dm.data, dm.targets, nn.TrainConfig(learning_rate=1.0))
    return {"net": net, "dm": dm, "train": train,
            "held": [obp_records[i] for i in held],
            "stats": TrainingStats.from_training(train, dm)}



# acceptance report: one line per criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
