import numpy as np
import pytest

from divsafe.config import RunConfig
from divsafe.harness.data import fixture
from divsafe.harness.pipeline import fit_bundle, train_model


@pytest.fixture(scope="session")
def default_run():
    """Model, calibrated bundle and evaluation split for the default configuration."""
    cfg = RunConfig({})
    train_ds = fixture("train")
    model, losses = train_model(cfg, train_ds)
    bundle = fit_bundle(cfg, model, train_ds, fixture("calibrate"))
    return {"cfg": cfg, "model": model, "losses": losses, "bundle": bundle,
            "train": train_ds, "evaluate": fixture("evaluate")}


@pytest.fixture
def two_blobs():
    g = np.random.default_rng(3)
    X = np.concatenate([g.normal([-3, 0], 0.5, (100, 2)), g.normal([3, 0], 0.5, (100, 2))])
    y = np.repeat([0, 1], 100)
    return X, y


ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store one acceptance line; printed at the end of the session."""
    ACCEPTANCE[criterion] = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    print(ACCEPTANCE[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
