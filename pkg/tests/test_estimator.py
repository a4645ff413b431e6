import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from do3d.estimator import DecomposedSceneFitter
from do3d.exceptions import ContractError


def test_params_and_clone():
    est = DecomposedSceneFitter(iterations=(3, 2, 1, 0), w_ds=0.01)
    p = est.get_params()
    assert p["iterations"] == (3, 2, 1, 0) and p["w_ds"] == 0.01
    c = clone(est)
    assert c.get_params() == p and c is not est


def test_fit_predict_transform(moving_box):
    est = DecomposedSceneFitter(iterations=(20, 5, 5, 5)).fit(moving_box)
    depth = est.predict()
    assert depth.shape == moving_box.shape and np.all(depth > 0)
    img = est.transform(moving_box)
    assert img.shape == moving_box.image_t.shape
    assert est.score(moving_box) <= 0
    assert [h["stage"] for h in est.history_][0] == 1
    assert "stage2_filter" in est.report_


def test_not_fitted(moving_box):
    with pytest.raises(NotFittedError):
        DecomposedSceneFitter().predict()


def test_bad_input():
    with pytest.raises(ContractError):
        DecomposedSceneFitter().fit(np.zeros((4, 4)))
    with pytest.raises(ContractError):
        DecomposedSceneFitter(iterations=(1, 2)).fit(type("P", (), {
            "K": 0, "image_t": 0, "image_s": 0, "instances": []})())
