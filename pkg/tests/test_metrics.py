import csv
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ewginn.metrics import (
    PLANE_COLUMNS,
    ErrorPoint,
    ZeroMaxFlowError,
    median_model,
    mre_av,
    mre_phi,
    write_error_plane,
)


class TestMRE:
    def test_perfect(self, rng):
        t = rng.uniform(0.1, 1, size=(5, 3))
        assert mre_av(t, t) == 0.0 and mre_phi(t, t) == 0.0

    def test_symmetric_errors(self):
        assert mre_av([[1.5, 0.5]], [[1.0, 1.0]]) == 0.25
        assert mre_phi([[1.5, 0.5]], [[1.0, 1.0]]) == 0.0

    def test_uniform_doubling(self):
        assert mre_phi([[2.0, 2.0]], [[1.0, 1.0]]) == 1.0

    def test_zero_predictor(self, rng):
        t = rng.uniform(0.1, 1, size=(7, 4))
        assert mre_phi(np.zeros_like(t), t) == 1.0

    def test_zero_flow_rejected(self):
        with pytest.raises(ZeroMaxFlowError):
            mre_av([[0.1, 0.2], [0.3, 0.0]], [[1.0, 1.0], [0.0, 0.0]])

    def test_zero_flow_dropped_on_request(self):
        got = mre_av([[1.5, 0.5], [9.0, 9.0]], [[1.0, 1.0], [0.0, 0.0]], drop_zero=True)
        assert got == 0.25

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mre_phi(np.ones((2, 3)), np.ones((2, 2)))

    def test_mre_phi_bounded_by_m_times_mre_av(self, rng):
        for _ in range(1000):
            N, m = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            t = rng.uniform(0.01, 1, size=(N, m))
            p = t + rng.normal(scale=rng.uniform(0.01, 2), size=(N, m))
            assert mre_phi(p, t) <= m * mre_av(p, t) * (1 + 1e-12)

    @settings(max_examples=100, deadline=None)
    @given(
        arrays(np.float64, (3, 2), elements=st.floats(0.01, 10)),
        arrays(np.float64, (3, 2), elements=st.floats(-10, 10)),
        st.floats(1e-3, 1e3),
    )
    def test_scale_invariant(self, targets, preds, scale):
        for metric in (mre_av, mre_phi):
            scaled = metric(scale * preds, scale * targets)
            assert math.isclose(scaled, metric(preds, targets), rel_tol=1e-12, abs_tol=1e-14)


def _points(coords, config_id="c"):
    return [ErrorPoint(a, b, config_id, seed) for seed, (a, b) in enumerate(coords)]


class TestMedian:
    def test_distances_one_to_five(self):
        pts = _points([(0, 3), (0, 1), (0, 5), (0, 2), (0, 4)])
        assert median_model(pts).distance == 3

    def test_identical(self):
        pts = _points([(0.2, 0.3)] * 5)
        chosen = median_model(pts)
        assert (chosen.mre_av, chosen.mre_phi) == (0.2, 0.3)
        assert chosen.seed == 2

    def test_worked_example(self):
        pts = _points([(0.1, 0), (0, 0.2), (0.3, 0.4), (0.05, 0.05), (1, 1)])
        chosen = median_model(pts)
        assert (chosen.mre_av, chosen.mre_phi) == (0, 0.2)

    def test_permutation_invariant(self):
        pts = _points([(0.1, 0), (0, 0.2), (0.3, 0.4), (0.05, 0.05), (1, 1)])
        results = {median_model(list(p)).seed for p in itertools.permutations(pts)}
        assert results == {1}

    def test_even_count(self):
        with pytest.raises(ValueError):
            median_model(_points([(0, 1), (0, 2)]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ErrorPoint(-0.1, 0.0)


def test_error_plane_csv(tmp_path):
    row = {
        "config_id": "gi-elu-H3-F1-none",
        "layer_kind": "gi",
        "seed": 0,
        "activation": "elu",
        "H": 3,
        "F": 1,
        "pool": "none",
        "n_params": 60,
        "mre_av": 0.1,
        "mre_phi": 0.2,
        "is_median": 1,
    }
    path = tmp_path / "plane.csv"
    write_error_plane([row], path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == PLANE_COLUMNS
    assert float(rows[0]["mre_phi"]) == 0.2
