import itertools

import numpy as np
import pytest

from cbcosr import data as D


def test_generate_shape_and_balance():
    ds = D.generate_synthetic(D.SyntheticSpec(num_classes=8, samples_per_class=100))
    assert ds.features.shape == (800, 16)
    assert np.bincount(ds.labels).tolist() == [100] * 8


def test_generate_tiny_spread_collapses_to_means():
    spec = D.SyntheticSpec(num_classes=4, dim=5, samples_per_class=3, cluster_spread=1e-300)
    ds = D.generate_synthetic(spec)
    means = D.cluster_means(4, 5, spec.separation)
    np.testing.assert_allclose(ds.features, means[ds.labels], rtol=1e-15, atol=1e-290)


def test_generate_deterministic():
    a = D.generate_synthetic(D.SyntheticSpec(seed=7))
    b = D.generate_synthetic(D.SyntheticSpec(seed=7))
    assert a.features.tobytes() == b.features.tobytes()
    assert not np.array_equal(a.features, D.generate_synthetic(D.SyntheticSpec(seed=8)).features)


@pytest.mark.parametrize("k,d", [(8, 16), (5, 5), (6, 3), (16, 4)])
def test_cluster_means_separated(k, d):
    m = D.cluster_means(k, d, 4.0)
    dists = [np.linalg.norm(m[i] - m[j]) for i, j in itertools.combinations(range(k), 2)]
    assert min(dists) >= 4.0 - 1e-12


def test_cluster_means_capacity():
    with pytest.raises(ValueError):
        D.cluster_means(9, 3, 1.0)


def test_make_split_protocol_sizes():
    s = D.make_split(8, 5, 0)
    assert len(s.known_ids) == 5 and len(s.unknown_ids) == 3
    s = D.make_split(10, 6, 0)
    assert len(s.known_ids) == 6 and len(s.unknown_ids) == 4
    assert set(s.known_ids) | set(s.unknown_ids) == set(range(10))


def test_make_split_seeded():
    assert D.make_split(8, 5, 3) == D.make_split(8, 5, 3)
    assert len({D.make_split(8, 5, s).known_ids for s in range(10)}) > 1


@pytest.mark.parametrize("k,n", [(8, 1), (8, 8), (3, 4)])
def test_make_split_bounds(k, n):
    with pytest.raises(ValueError):
        D.make_split(k, n, 0)


def test_apply_split_partition_and_remap():
    ds = D.generate_synthetic(D.SyntheticSpec(num_classes=8, samples_per_class=10))
    split = D.SplitSpec((3, 5, 7), (0, 1, 2, 4, 6), seed=0)
    assert split.remap[5] == 1
    known, unknown = D.apply_split(ds, split)
    assert len(known) + len(unknown) == len(ds)
    assert set(known.labels) == {0, 1, 2} and known.num_classes == 3
    assert set(unknown.labels) == {0, 1, 2, 4, 6}
    np.testing.assert_array_equal(known.features[known.labels == 1], ds.features[ds.labels == 5])


def test_apply_split_all_known():
    ds = D.generate_synthetic(D.SyntheticSpec(num_classes=3, samples_per_class=4))
    known, unknown = D.apply_split(ds, D.SplitSpec((0, 1, 2), (), 0))
    assert len(known) == 12 and len(unknown) == 0


def test_apply_split_rejects_bad_id():
    ds = D.generate_synthetic(D.SyntheticSpec(num_classes=3, samples_per_class=4))
    with pytest.raises(ValueError):
        D.apply_split(ds, D.SplitSpec((0, 5), (1,), 0))


def test_stratified_split_counts():
    ds = D.generate_synthetic(D.SyntheticSpec(num_classes=4, samples_per_class=50))
    tr, te = D.stratified_split(ds, 0.2, 0)
    assert np.bincount(tr.labels).tolist() == [40] * 4
    assert np.bincount(te.labels).tolist() == [10] * 4


def test_batches():
    ds = D.LabeledSet(np.arange(20.0).reshape(10, 2), np.arange(10) % 2, 2)
    sizes = [len(y) for _, y in D.batches(ds, 4, 0)]
    assert sizes == [4, 4, 2]
    a = np.concatenate([x for x, _ in D.batches(ds, 4, 0)])
    b = np.concatenate([x for x, _ in D.batches(ds, 4, 0)])
    assert np.array_equal(a, b)
    assert sorted(map(tuple, a)) == sorted(map(tuple, ds.features))
    with pytest.raises(ValueError):
        list(D.batches(ds, 0, 0))


def test_csv_round_trip_bit_exact(tmp_path, rng):
    feats = rng.standard_normal((7, 3)) * np.array([1e-300, 1.0, 1e300])
    ds = D.LabeledSet(feats, [0, 1, 2, 3, 0, 1, 2], 4)
    D.save_features(ds, tmp_path / "f.csv")
    back = D.load_features(tmp_path / "f.csv")
    assert back.features.tobytes() == ds.features.tobytes()
    assert back.labels.tolist() == ds.labels.tolist()
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "label,f0,f1,f2"


def test_csv_errors(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("")
    with pytest.raises(D.HeaderError):
        D.load_features(p)
    p.write_text("y,a,b\n0,1,2\n")
    with pytest.raises(D.HeaderError):
        D.load_features(p)
    p.write_text("label,f0,f1\n0,1.0,2.0\n1,3.0\n")
    with pytest.raises(D.RowLengthError, match=r":3:"):
        D.load_features(p)
    p.write_text("label,f0\n-1,1.0\n")
    with pytest.raises(D.LabelError):
        D.load_features(p)
    p.write_text("label,f0\n4,1.0\n")
    with pytest.raises(D.LabelError):
        D.load_features(p, num_classes=3)
    p.write_text("label,f0\n0,abc\n")
    with pytest.raises(D.ValueFormatError):
        D.load_features(p)
