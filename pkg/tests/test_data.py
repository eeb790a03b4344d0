import numpy as np
import pytest

from magnonrc.data import (DataError, Dataset, dataset_path, gen_dimred, load_iris, load_statlog, load_stock,
                           minmax, nearest_center, pairs, scale_to_max, stock_from_closes, stratified_subset)


def _write(path, text):
    path.write_text(text)
    return path


def test_stock_hand_arithmetic(tmp_path):
    p = _write(tmp_path / "s.csv", "date,close\n2020-01-02,100\n2020-01-03,110\n2020-01-06,99\n")
    ds = load_stock(p)
    np.testing.assert_allclose(ds.meta["pct"], [0.10])
    np.testing.assert_allclose(ds.sequences[:, 0], [1.0])
    np.testing.assert_array_equal(ds.targets, [0])
    full = stock_from_closes([100, 110, 99, 120])
    pct = np.array([0.10, -0.10, 21 / 99])
    np.testing.assert_allclose(full.sequences[:, 0], ((pct - pct.min()) / (pct.max() - pct.min()))[:2])
    np.testing.assert_array_equal(full.targets, [0, 1])


def test_stock_degenerate_and_monotone():
    ds = stock_from_closes([5.0] * 6)
    assert np.all(ds.sequences == 0.5)
    assert np.all(ds.targets == 0)
    assert np.all(stock_from_closes(np.arange(1, 20.0)).targets == 1)


def test_stock_errors(tmp_path):
    with pytest.raises(DataError):
        stock_from_closes([1, 2])
    with pytest.raises(DataError):
        stock_from_closes([1, 0, 2])
    p = _write(tmp_path / "s.csv", "2020-01-03,1\n2020-01-02,2\n2020-01-06,3\n")
    with pytest.raises(DataError):
        load_stock(p, header=False)


def test_stock_no_leakage():
    # feature i only uses closes up to day i + 1; changing later closes leaves it alone
    closes = np.array([10, 11, 10.5, 12, 11.8, 12.5, 13.1])
    a = stock_from_closes(closes)
    b = stock_from_closes(np.r_[closes[:4], [20, 30, 40]])
    pa = a.meta["pct"]
    pb = b.meta["pct"]
    np.testing.assert_array_equal(pa[:3], pb[:3])
    # target i is the sign of the move after feature i
    np.testing.assert_array_equal(a.targets, (np.diff(closes)[1:] > 0).astype(int))


def test_bundled_stock_window():
    ds = load_stock(dataset_path("sp500_2013.csv"))
    assert len(ds) == 248
    assert ds.meta["first"] == "2013-01-04"
    assert ds.sequences.min() == 0 and ds.sequences.max() == 1


def test_iris_scaling_and_inversion():
    ds = load_iris(classes="all")
    assert len(ds) == 150 and ds.n_classes == 3
    assert ds.features[:, 0].max() == pytest.approx(1.0)  # petal length 6.9 is the table maximum
    assert ds.features[:, 1].min() == pytest.approx(0.0)  # widest petal inverts to 0
    assert np.min(np.abs(ds.features[:, 0] - 5.1 / 6.9)) < 1e-12
    assert np.all((ds.features >= 0) & (ds.features <= 1))


def test_iris_subsets_and_aliases(tmp_path):
    a = load_iris(classes="setosa/versicolor")
    b = load_iris(classes=["Iris-versicolor", "viginica"])
    assert len(a) == 100 and len(b) == 100
    np.testing.assert_array_equal(np.bincount(a.targets), [50, 50])
    with pytest.raises(DataError):
        load_iris(classes=["daisy"])
    with pytest.raises(DataError):
        load_iris(feature_pair=("petal_length", "stem_width"))
    p = _write(tmp_path / "i.data", "6.0,3.0,4.0,2.0,Iris-setosa\n3.0,1.5,2.0,1.0,Iris-versicolor\n")
    ds = load_iris(p, feature_pair=("petal_length", "petal_width"))
    np.testing.assert_allclose(ds.features, [[1.0, 0.0], [0.5, 0.5]])


def test_statlog_rule_and_pairing():
    ds = load_statlog()
    assert ds.sequences.shape == (1000, 6, 2)
    assert set(np.unique(ds.targets)) == {0, 1}
    assert np.sum(ds.targets == 1) == 300
    assert np.all((ds.flat >= 0) & (ds.flat <= 1))
    np.testing.assert_array_equal(ds.flat.reshape(1000, 6, 2), ds.sequences)


def test_statlog_synthetic_file(tmp_path):
    rng = np.random.default_rng(0)
    n = 20
    cols = [rng.integers(1, 73, n) if k < 12 else rng.integers(0, 2, n) for k in range(24)]
    cols[0][0] = 72
    table = np.column_stack(cols + [rng.integers(1, 3, n)])
    p = tmp_path / "g.txt"
    np.savetxt(p, table, fmt="%d")
    ds = load_statlog(p)
    assert ds.sequences[0, 0, 0] == pytest.approx(72 / table[:, 0].max())
    np.testing.assert_allclose(ds.flat[:, 0], table[:, 0] / table[:, 0].max())
    np.testing.assert_allclose(ds.flat[:, 11], table[:, 11] / table[:, 11].max())
    bad = table.copy()
    bad[:, 12] = rng.integers(0, 5, n)
    np.savetxt(p, bad, fmt="%d")
    with pytest.raises(DataError, match="13"):
        load_statlog(p)


def test_dimred_rules():
    a = gen_dimred(seed=7)
    b = gen_dimred(seed=7)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.targets, b.targets)
    centers = np.array(a.meta["centers"])
    np.testing.assert_array_equal(nearest_center(centers, centers), [0, 1, 2])
    d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    assert d[np.triu_indices(3, 1)].min() >= 0.3
    c = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0]])
    assert nearest_center(np.array([[0.5, 0.0]]), c)[0] == 0
    assert np.all((a.features >= 0) & (a.features <= 1))
    with pytest.raises(DataError):
        gen_dimred(n_samples=2)


def test_dimred_convex_regions():
    ds = gen_dimred(seed=1, n_samples=400)
    centers = np.array(ds.meta["centers"])
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 100:
        i, j = rng.integers(0, 400, 2)
        if ds.targets[i] != ds.targets[j]:
            continue
        t = rng.uniform()
        mid = t * ds.features[i] + (1 - t) * ds.features[j]
        assert nearest_center(mid[None], centers)[0] == ds.targets[i]
        checked += 1


def test_helpers(tmp_path):
    np.testing.assert_allclose(minmax([2, 4, 6]), [0, 0.5, 1])
    np.testing.assert_allclose(scale_to_max(np.array([[1, 0], [2, 0]])), [[0.5, 0], [1, 0]])
    np.testing.assert_array_equal(pairs(np.arange(8).reshape(2, 4))[1], [[4, 5], [6, 7]])
    with pytest.raises(DataError):
        pairs(np.zeros((2, 3)))
    idx = stratified_subset(np.r_[np.zeros(70), np.ones(30)].astype(int), 20, seed=1)
    assert len(idx) == 20 and np.all(np.diff(idx) > 0)
    ds = Dataset([[0.1, 0.2]], [1], {"source": "x"})
    ds.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[:2] == ["# {'source': 'x'}", "f0,f1,target"]
    with pytest.raises(DataError):
        Dataset([[0.1]], [0, 1])
