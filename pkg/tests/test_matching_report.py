import itertools
import json

import numpy as np
import pytest

from selfselect.matching import match_columns
from selfselect.report import EstimationReport


def test_permuted_truth_has_zero_error(rng):
    W = rng.standard_normal((3, 4))
    perm = np.array([2, 0, 3, 1])
    m = match_columns(W[:, perm], W)
    assert m.total == 0
    np.testing.assert_array_equal(perm[m.perm], np.arange(4))


def test_single_column_identity():
    m = match_columns([[1.0], [2.0]], [[1.5], [2.0]])
    assert list(m.perm) == [0] and m.errors[0] == pytest.approx(0.5)


@pytest.mark.parametrize("k", [2, 3, 5, 8])
def test_matches_brute_force(k, rng):
    W = rng.standard_normal((3, k))
    est = W[:, rng.permutation(k)] + 0.1 * rng.standard_normal((3, k))
    m = match_columns(est, W)
    cost = np.linalg.norm(est[:, :, None] - W[:, None, :], axis=0)
    best = min(sum(cost[p[j], j] for j in range(k)) for p in itertools.permutations(range(k)))
    assert m.total == pytest.approx(best)
    assert sorted(m.perm) == list(range(k))
    assert m.total <= 0.1 * np.sqrt(3 * k) * 3


def test_unequal_column_counts():
    W = np.eye(3)
    m = match_columns(W[:, :2], W)
    assert list(m.perm) == [0, 1, -1] and m.errors[2] == pytest.approx(1.0)
    m = match_columns(np.column_stack([W, np.ones(3)]), W[:, :1])
    assert list(m.perm) == [0] and m.total == 0


def test_report_json_round_trip():
    W = np.array([[1.0, 0.0], [0.0, 1.0]])
    rep = EstimationReport("psgd", W[:, ::-1] + 0.01, W, W * 1.5, {"T": 10, "arr": np.arange(2)}, 0.5)
    d = json.loads(rep.to_json())
    assert d["method"] == "psgd"
    assert d["matching"] == [2, 1]
    assert all(e >= 0 for e in d["errors"])
    assert d["diagnostics"]["arr"] == [0, 1]
    assert "psgd" in rep.summary()
    blank = EstimationReport("grid", W, None, None, {}, 0.0)
    assert blank.errors() is None and "errors" not in json.loads(blank.to_json())
