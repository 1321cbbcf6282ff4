import numpy as np
import pytest

from studysim import _core
from studysim.events import derive_dropout_labels
from studysim.factorization import FactorModel, Hyperparams, fit_from_stream
from studysim.synthetic import gen_log, gen_world


@pytest.fixture(params=_core.available_backends())
def backend(request):
    """Run a test under each available kernel backend."""
    with _core.use_backend(request.param):
        yield request.param


@pytest.fixture(scope="session")
def small_world():
    return gen_world(40, 30, 3, seed=11)


@pytest.fixture(scope="session")
def small_log(small_world):
    log = gen_log(small_world)
    return derive_dropout_labels(log, workbook_sizes=small_world.workbook_sizes)


@pytest.fixture(scope="session")
def small_model(small_log):
    return fit_from_stream(small_log, Hyperparams(factors=4), seed=11, epochs=2)


def make_toy_model(U, E, user_ids=None, exercise_ids=None,
                   hyper: Hyperparams | None = None) -> FactorModel:
    """FactorModel with factor matrices set directly (for hand-checked cases)."""
    U = np.asarray(U, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    model = FactorModel(hyper or Hyperparams(factors=U.shape[1]), seed=0)
    model.U = U.copy()
    model.E = E.copy()
    model.user_index = {u: i for i, u in enumerate(user_ids or
                                                   [f"u{i}" for i in range(U.shape[0])])}
    model.exercise_index = {e: i for i, e in enumerate(exercise_ids or
                                                       [f"e{j}" for j in range(E.shape[1])])}
    return model
