import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hanm import metrics
from hanm.errors import DimensionError
from hanm.mcvci import Verdict

from oracles import ari_pairs, nmi_plugin

labelings = st.integers(2, 12).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 3), min_size=n, max_size=n),
                        st.lists(st.integers(0, 3), min_size=n, max_size=n)))


def test_direction_accuracy_examples():
    assert metrics.direction_accuracy(["XtoY", "YtoX"], ["XtoY", "YtoX"]) == 1.0
    assert metrics.direction_accuracy(["XtoY", "XtoY"], ["XtoY", "YtoX"], [2, 1]) == pytest.approx(2 / 3)
    assert metrics.direction_accuracy([Verdict.UNDECIDED], ["XtoY"]) == 0.0
    assert metrics.direction_accuracy([Verdict.X_TO_Y], ["XtoY"]) == 1.0
    with pytest.raises(ValueError):
        metrics.direction_accuracy([], [])
    with pytest.raises(DimensionError):
        metrics.direction_accuracy(["XtoY"], ["XtoY", "YtoX"])


def test_contingency_table():
    t = metrics.ContingencyTable.from_labels([0, 0, 1, 2], ["a", "b", "b", "b"])
    assert t.counts.tolist() == [[1, 1], [0, 1], [0, 1]]
    assert t.n == 4 and t.row_sums.tolist() == [2, 1, 1] and t.col_sums.tolist() == [1, 3]


def test_ari_examples():
    a = [0, 0, 1, 1, 2, 2]
    assert metrics.ari(a, a) == 1.0
    assert metrics.ari(a, [5, 5, 9, 9, 7, 7]) == 1.0
    assert metrics.ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(ari_pairs([0, 0, 1, 1], [0, 1, 0, 1]), abs=1e-12)
    with pytest.raises(DimensionError):
        metrics.ari([0, 1], [0, 1, 1])


def test_nmi_examples():
    a = [0, 0, 1, 1, 2]
    assert metrics.nmi(a, [3, 3, 4, 4, 5]) == pytest.approx(1.0, abs=1e-15)
    assert metrics.nmi(a, [0] * 5) == 0.0
    assert metrics.nmi([1] * 5, [0] * 5) == 1.0
    rng = np.random.default_rng(0)
    u, v = rng.integers(0, 3, 8).tolist(), rng.integers(0, 3, 8).tolist()
    assert metrics.nmi(u, v) == pytest.approx(nmi_plugin(u, v), abs=1e-12)
    assert metrics.nmi(u, v, "geometric") == pytest.approx(nmi_plugin(u, v, "geometric"), abs=1e-12)
    with pytest.raises(ValueError):
        metrics.nmi(u, v, "harmonic")


@settings(max_examples=150, deadline=None)
@given(labelings)
def test_metrics_match_oracles(pair):
    a, b = pair
    assert metrics.ari(a, b) == pytest.approx(ari_pairs(a, b), abs=1e-12)
    assert metrics.nmi(a, b) == pytest.approx(nmi_plugin(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labelings, st.permutations(range(4)))
def test_metrics_symmetric_and_rename_invariant(pair, perm):
    a, b = pair
    renamed = [perm[v] for v in b]
    assert metrics.ari(a, b) == pytest.approx(metrics.ari(b, a), abs=1e-12)
    assert metrics.ari(a, b) == pytest.approx(metrics.ari(a, renamed), abs=1e-12)
    assert metrics.nmi(a, b) == pytest.approx(metrics.nmi(b, a), abs=1e-12)
    assert metrics.nmi(a, b) == pytest.approx(metrics.nmi(a, renamed), abs=1e-12)
    assert 0.0 <= metrics.nmi(a, b) <= 1.0
    assert metrics.ari(a, b) <= 1.0 + 1e-12


def test_ari_of_independent_labelings_centres_on_zero():
    rng = np.random.default_rng(1)
    values = [metrics.ari(rng.integers(0, 3, 100), rng.integers(0, 3, 100)) for _ in range(10_000)]
    assert abs(np.mean(values)) < 0.02
