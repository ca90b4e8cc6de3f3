import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hanm import data
from hanm.data import Direction, MechanismSpec
from hanm.errors import ConfigError, DimensionError, PairSkipped, ParseError


def test_dataset_validation():
    with pytest.raises(DimensionError):
        data.BivariateDataset([1, 2, 3], [1, 2])
    with pytest.raises(DimensionError):
        data.BivariateDataset([1], [1])
    with pytest.raises(DimensionError):
        data.BivariateDataset([1, 2], [1, 2], mechanism_labels=[0])


def test_swapped_mirrors_truth():
    ds = data.BivariateDataset([1, 2], [3, 4], ground_truth=Direction.X_TO_Y)
    sw = ds.swapped()
    assert sw.x.tolist() == [3, 4] and sw.ground_truth == Direction.Y_TO_X


def test_mechanism_spec_validation():
    with pytest.raises(ConfigError):
        MechanismSpec("f9")
    with pytest.raises(ConfigError):
        MechanismSpec(offset=(2.0, 1.0))
    with pytest.raises(ConfigError):
        MechanismSpec(sigma=-1.0)
    with pytest.raises(ConfigError):
        MechanismSpec(n_samples=0)
    with pytest.raises(ConfigError):
        MechanismSpec("f5", x_range=(-1.0, 1.0))
    MechanismSpec("f5", x_range=(0.01, 1.0))


def test_noiseless_single_class_follows_curve():
    ds = data.gen_mechanism_mixture([MechanismSpec("f3", offset=(1.0, 1.0), sigma=0.0)], seed=0)
    np.testing.assert_array_equal(ds.y, ds.x ** 2)


@pytest.mark.parametrize("family", sorted(data.MECHANISMS))
def test_noiseless_residuals_vanish(family):
    specs = [dataclasses.replace(s, sigma=0.0, offset=(o, o))
             for s, o in zip(data.default_specs(family), (1.05, 0.55))]
    ds = data.gen_mechanism_mixture(specs, seed=3)
    a = np.where(ds.mechanism_labels == 0, 1.05, 0.55)
    np.testing.assert_allclose(ds.y - a * data.MECHANISMS[family](ds.x), 0.0, atol=1e-15)


def test_default_mixture_shape_balance_and_determinism():
    ds = data.gen_mechanism_mixture(data.default_specs("f1"), seed=5)
    assert len(ds) == 200
    assert np.bincount(ds.mechanism_labels).tolist() == [100, 100]
    assert ds.ground_truth == Direction.X_TO_Y
    again = data.gen_mechanism_mixture(data.default_specs("f1"), seed=5)
    assert ds.x.tobytes() == again.x.tobytes() and ds.y.tobytes() == again.y.tobytes()
    other = data.gen_mechanism_mixture(data.default_specs("f1"), seed=6)
    assert ds.x.tobytes() != other.x.tobytes()
    assert ds.x.min() >= 0.1 and ds.x.max() <= 1.1
    with pytest.raises(ConfigError):
        data.gen_mechanism_mixture([], seed=0)


def test_offsets_drawn_per_sample():
    spec = MechanismSpec("f4", offset=(1.0, 1.1), sigma=0.0, n_samples=500)
    ds = data.gen_mechanism_mixture([spec], seed=1)
    a = ds.y / np.tanh(ds.x)
    assert a.min() >= 1.0 and a.max() <= 1.1
    assert np.unique(np.round(a, 12)).size > 400


def test_sim_style_generator():
    a, b = data.gen_sim_style(300, seed=0), data.gen_sim_style(300, seed=1)
    assert len(a) == 300 and a.ground_truth == Direction.X_TO_Y
    assert a.x.tobytes() != b.x.tobytes()
    clean = data.gen_sim_style(50, seed=2, noise_x=0.0, noise_y=0.0, noise=0.0)
    order = np.argsort(clean.x)
    # a noiseless function of x: equal x values give equal y, and y is reproducible
    again = data.gen_sim_style(50, seed=2, noise_x=0.0, noise_y=0.0, noise=0.0)
    np.testing.assert_array_equal(clean.y[order], again.y[order])


def test_standardize_examples():
    ds = data.standardize(data.BivariateDataset([1.0, 2.0, 3.0], [2.0, 4.0, 9.0]))
    # population standard deviation: sqrt(2/3)
    np.testing.assert_allclose(ds.x, [-1.224744871391589, 0.0, 1.224744871391589], rtol=0, atol=1e-12)
    with pytest.raises(ConfigError):
        data.standardize(data.BivariateDataset([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(3, 40), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 40, elements=st.floats(-1e3, 1e3)))
def test_standardize_properties(x, y):
    y = y[:x.size]
    if x.std() < 1e-3 or y.std() < 1e-3:
        return
    ds = data.BivariateDataset(x, y)
    st_ = data.standardize(ds)
    assert abs(st_.x.mean()) < 1e-12 and abs(st_.x.std() - 1) < 1e-12
    assert abs(st_.y.mean()) < 1e-12 and abs(st_.y.std() - 1) < 1e-12
    twice = data.standardize(st_)
    np.testing.assert_allclose(twice.x, st_.x, atol=1e-12)
    rx, ry = twice.transform.inverse(twice.x, twice.y)
    np.testing.assert_allclose(rx, x, atol=1e-10 * max(1.0, np.abs(x).max()))
    np.testing.assert_allclose(ry, y, atol=1e-10 * max(1.0, np.abs(y).max()))


def test_parse_meta_and_load_pair(tmp_path):
    meta = tmp_path / "pairmeta.txt"
    meta.write_text("1 1 1 2 2 1.0\n2 2 2 1 1 0.5\n3 1 2 3 3 1\n")
    rows = data.parse_meta(meta)
    assert [r.pair_id for r in rows] == [1, 2, 3] and rows[1].weight == 0.5
    (tmp_path / "pair0001.txt").write_text("1 2\n3 4\n5 6\n")
    (tmp_path / "pair0002.txt").write_text("1 2\n3 4\n5 7\n")
    one = data.load_pair_file(data.pair_path(tmp_path, 1), rows[0])
    assert len(one) == 3 and one.ground_truth == Direction.X_TO_Y and one.weight == 1.0
    two = data.load_pair_file(data.pair_path(tmp_path, 2), rows[1])
    assert two.x.tolist() == [1, 3, 5] and two.ground_truth == Direction.Y_TO_X and two.weight == 0.5
    with pytest.raises(PairSkipped):
        data.load_pair_file(data.pair_path(tmp_path, 1), rows[2])
    assert {52, 53, 54, 55, 71, 105, 107, 108} == set(data.EXCLUDED_PAIRS)


def test_malformed_inputs_name_the_line(tmp_path):
    bad = tmp_path / "pair0001.txt"
    bad.write_text("1 2\n3 x\n")
    with pytest.raises(ParseError, match=":2:"):
        data.load_pair_file(bad, data.PairMeta(1, (1, 1), (2, 2), 1.0))
    meta = tmp_path / "meta.txt"
    meta.write_text("1 1 1 2 2\n")
    with pytest.raises(ParseError, match=":1:"):
        data.parse_meta(meta)


def test_load_csv(tmp_path):
    path = tmp_path / "ozone.csv"
    rows = ["site,temp,ozone"] + [f"{'b' if i % 2 else 'a'},{i},{2 * i}" for i in range(8)]
    rows += ["a,NA,3", "b,4,"]
    path.write_text("\n".join(rows) + "\n")
    ds = data.load_csv(path, "temp", "ozone", "site")
    assert len(ds) == 8 and ds.dropped_rows == 2
    assert sorted(set(ds.mechanism_labels.tolist())) == [0, 1]
    with pytest.raises(ConfigError):
        data.load_csv(path, "temp", "nope")
    path.write_text("x,y\n1,2\n3,abc\n")
    with pytest.raises(ParseError, match="row 3"):
        data.load_csv(path, "x", "y")


def test_write_csv_round_trip(tmp_path):
    ds = data.gen_mechanism_mixture(data.default_specs("f2", n_samples=10), seed=0)
    path = tmp_path / "out.csv"
    data.write_csv(ds, path)
    back = data.load_csv(path, "x", "y", "label")
    assert back.x.tobytes() == ds.x.tobytes() and back.y.tobytes() == ds.y.tobytes()
    assert back.mechanism_labels.tolist() == ds.mechanism_labels.tolist()
