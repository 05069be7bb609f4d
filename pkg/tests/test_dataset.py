from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gasgru import dataset, simgen
from gasgru.dataset import N_NODES, Dataset, DatasetError, GasLabel, Sample


def label_counts(ds):
    counts = ds.class_counts()
    return tuple(counts[g] for g in GasLabel)


def _sample(sid="a", label=GasLabel.H2, h2=100.0, co=0.0, channels=1):
    return Sample(sid, label, h2, co, np.ones((N_NODES, channels)))


def _toy_dataset(n_h2, n_co, n_mix):
    samples = []
    for label, n in ((GasLabel.H2, n_h2), (GasLabel.CO, n_co), (GasLabel.MIX, n_mix)):
        for _ in range(n):
            h2 = 0.0 if label == GasLabel.CO else 50.0
            co = 0.0 if label == GasLabel.H2 else 50.0
            samples.append(Sample(f"x{len(samples):04d}", label, h2, co, np.zeros((N_NODES, 1))))
    return Dataset(tuple(samples), ("c",))


class TestSample:
    def test_readings_frozen(self):
        s = _sample()
        with pytest.raises(ValueError):
            s.readings[0, 0] = 2.0

    @pytest.mark.parametrize("shape", [(N_NODES - 1, 1), (N_NODES, 3), (N_NODES,)])
    def test_bad_shape(self, shape):
        with pytest.raises(DatasetError):
            Sample("a", GasLabel.H2, 10.0, 0.0, np.ones(shape))

    def test_non_finite(self):
        r = np.ones((N_NODES, 1))
        r[5, 0] = np.nan
        with pytest.raises(DatasetError, match="non-finite"):
            Sample("a", GasLabel.H2, 10.0, 0.0, r)

    @pytest.mark.parametrize(
        "label,h2,co",
        [(GasLabel.H2, 10.0, 5.0), (GasLabel.CO, 10.0, 5.0), (GasLabel.MIX, 0.0, 5.0), (GasLabel.H2, 0.0, 0.0)],
    )
    def test_label_concentration_consistency(self, label, h2, co):
        with pytest.raises(DatasetError, match="inconsistent"):
            Sample("a", label, h2, co, np.ones((N_NODES, 1)))

    def test_equality_compares_readings(self):
        assert _sample() == _sample()
        other = Sample("a", GasLabel.H2, 100.0, 0.0, np.full((N_NODES, 1), 2.0))
        assert _sample() != other

    def test_label_parse(self):
        assert GasLabel.parse(" mix ") is GasLabel.MIX
        with pytest.raises(DatasetError, match="unknown label"):
            GasLabel.parse("CH4")


class TestDataset:
    def test_duplicate_ids(self):
        with pytest.raises(DatasetError, match="duplicate"):
            Dataset((_sample("a"), _sample("a")), ("c",))

    def test_channel_count_mismatch(self):
        with pytest.raises(DatasetError):
            Dataset((_sample("a", channels=2),), ("c",))

    def test_subset_keeps_requested_order(self, small_ds):
        ids = small_ds.ids[::-1][:5]
        assert small_ds.subset(ids).ids == ids
        with pytest.raises(DatasetError, match="unknown sample id"):
            small_ds.subset(["nope"])

    def test_select_channels(self, small_ds):
        one = dataset.select_channels(small_ds, ["TGS2611"])
        assert one.channel_names == ("TGS2611",)
        np.testing.assert_array_equal(one.samples[0].readings[:, 0], small_ds.samples[0].readings[:, 1])
        with pytest.raises(DatasetError, match="unknown channel"):
            dataset.select_channels(small_ds, ["TGS999"])


class TestDiskFormat:
    def test_roundtrip(self, small_ds, tmp_path):
        simgen.write_dataset(small_ds, tmp_path)
        back = dataset.load_dataset(tmp_path)
        assert back.channel_names == small_ds.channel_names
        assert back.ids == small_ds.ids
        assert all(a == b for a, b in zip(back.samples, small_ds.samples))

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="manifest"):
            dataset.load_dataset(tmp_path)

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "manifest.csv").write_text("id,label,h2_ppm,co_ppm,path\n")
        with pytest.raises(DatasetError, match="empty dataset"):
            dataset.load_dataset(tmp_path)

    def test_bad_cell_reports_line(self, small_ds, tmp_path):
        simgen.write_dataset(small_ds.subset(small_ds.ids[:1]), tmp_path)
        path = tmp_path / "samples" / f"{small_ds.ids[0]}.csv"
        lines = path.read_text().splitlines()
        lines[10] = lines[10].split(",")[0] + ",abc,1.0"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match=r":11: cannot parse 'abc'"):
            dataset.load_dataset(tmp_path)

    def test_wrong_row_count(self, small_ds, tmp_path):
        simgen.write_dataset(small_ds.subset(small_ds.ids[:1]), tmp_path)
        path = tmp_path / "samples" / f"{small_ds.ids[0]}.csv"
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DatasetError, match=f"expected {N_NODES} data rows"):
            dataset.load_dataset(tmp_path)

    def test_bad_label_reports_manifest_line(self, small_ds, tmp_path):
        simgen.write_dataset(small_ds.subset(small_ds.ids[:2]), tmp_path)
        m = tmp_path / "manifest.csv"
        lines = m.read_text().splitlines()
        lines[2] = lines[2].replace("H2", "CH4", 1)
        m.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match=r"manifest.csv:3: unknown label"):
            dataset.load_dataset(tmp_path)


class TestSplit:
    def test_default_counts(self, default_ds):
        split = dataset.stratified_split(default_ds, 0.2, 0)
        test = default_ds.subset(split.test_ids)
        assert label_counts(test) == (30, 30, 60)
        assert len(split.trainval_ids) == 480
        assert set(split.test_ids).isdisjoint(split.trainval_ids)

    def test_seed_changes_split(self, default_ds):
        a = dataset.stratified_split(default_ds, 0.2, 0)
        b = dataset.stratified_split(default_ds, 0.2, 1)
        assert a.test_ids != b.test_ids
        assert a == dataset.stratified_split(default_ds, 0.2, 0)

    def test_rounds_half_up(self):
        ds = _toy_dataset(5, 5, 10)  # 5 * 0.3 = 1.5 -> 2
        split = dataset.stratified_split(ds, 0.3, 0)
        assert label_counts(ds.subset(split.test_ids)) == (2, 2, 3)

    def test_too_small_class(self):
        with pytest.raises(DatasetError, match="too few"):
            dataset.stratified_split(_toy_dataset(1, 5, 5), 0.2, 0)

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.tuples(st.integers(5, 40), st.integers(5, 40), st.integers(5, 40)),
        k=st.integers(2, 5),
        seed=st.integers(0, 2**31),
    )
    def test_fold_properties(self, n, k, seed):
        ds = _toy_dataset(*n)
        split = dataset.stratified_split(ds, 0.2, seed)
        if min(Counter(s.label for s in ds.subset(split.trainval_ids)).values()) < k:
            return
        folds = dataset.make_folds(split, ds, k, seed)
        flat = [i for f in folds.folds for i in f]
        assert sorted(flat) == sorted(split.trainval_ids)  # exhaustive and disjoint
        sizes = [len(f) for f in folds.folds]
        assert max(sizes) - min(sizes) <= 1
        for g in GasLabel:
            per = [ds.subset(f).class_counts()[g] for f in folds.folds]
            assert max(per) - min(per) <= 1
        train = folds.train_ids(0, split.trainval_ids)
        assert set(train).isdisjoint(folds.folds[0])
        assert len(train) + len(folds.folds[0]) == len(split.trainval_ids)

    def test_fold_errors(self, small_ds):
        split = dataset.stratified_split(small_ds, 0.2, 0)
        with pytest.raises(DatasetError, match="at least 2"):
            dataset.make_folds(split, small_ds, 1)
        with pytest.raises(DatasetError, match="fewer than k"):
            dataset.make_folds(split, small_ds, 9)

    def test_plans_roundtrip(self, small_ds, tmp_path):
        split = dataset.stratified_split(small_ds, 0.2, 4)
        folds = dataset.make_folds(split, small_ds, 4, 4)
        dataset.save_plans(tmp_path / "split.json", split, folds)
        assert dataset.load_plans(tmp_path / "split.json") == (split, folds)
