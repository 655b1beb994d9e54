import math

import numpy as np
import pytest

from tfgd import data


def fake_rows(n, start=0):
    lines = []
    for i in range(n):
        diag = "M" if i % 3 == 0 else "B"
        vals = ",".join(str(0.5 * i + c) for c in range(30))
        lines.append(f"{start + i},{diag},{vals}")
    return lines


class TestLoad:
    def test_canonical(self, wdbc):
        assert wdbc.features.shape == (569, 30)
        assert len(wdbc.ids) == 569
        assert not wdbc.standardized

    def test_class_counts(self, wdbc):
        assert int(wdbc.labels.sum()) == 212
        assert int((wdbc.labels == 0).sum()) == 357

    def test_order_preserved(self, wdbc, wdbc_path):
        first = wdbc_path.read_text().splitlines()[0].split(",")
        assert wdbc.ids[0] == first[0]
        assert wdbc.labels[0] == (1 if first[1] == "M" else 0)
        np.testing.assert_array_equal(wdbc.features[0], [float(v) for v in first[2:]])

    def test_short_row_rejected(self, tmp_path):
        lines = fake_rows(4)
        lines[2] = ",".join(lines[2].split(",")[:-1])
        p = tmp_path / "bad.data"
        p.write_text("\n".join(lines))
        with pytest.raises(data.DataFormatError, match="row 3"):
            data.load_wdbc(p)

    def test_bad_number(self, tmp_path):
        lines = fake_rows(3)
        parts = lines[1].split(",")
        parts[7] = "x1"
        lines[1] = ",".join(parts)
        p = tmp_path / "bad.data"
        p.write_text("\n".join(lines))
        with pytest.raises(data.DataFormatError, match=r"row 2, field 8"):
            data.load_wdbc(p)

    def test_bad_diagnosis(self, tmp_path):
        lines = fake_rows(3)
        lines[0] = lines[0].replace(",M,", ",Q,", 1)
        p = tmp_path / "bad.data"
        p.write_text("\n".join(lines))
        with pytest.raises(data.DataFormatError, match="diagnosis"):
            data.load_wdbc(p)

    def test_missing_value_rejected(self, tmp_path):
        lines = fake_rows(2)
        parts = lines[0].split(",")
        parts[5] = ""
        lines[0] = ",".join(parts)
        p = tmp_path / "bad.data"
        p.write_text("\n".join(lines))
        with pytest.raises(data.DataFormatError):
            data.load_wdbc(p)

    def test_header_skipped(self, tmp_path):
        header = "id,diagnosis," + ",".join(f"f{i}" for i in range(30))
        p = tmp_path / "h.data"
        p.write_text("\n".join([header] + fake_rows(5)))
        ds = data.load_wdbc(p)
        assert len(ds) == 5 and ds.ids[0] == "0"


class TestSplit:
    def test_philox_known_answer(self):
        # raw words of Philox4x64-10 keyed by 42; any port must reproduce these
        words = np.random.Philox(key=42).random_raw(3).tolist()
        assert words == [15129985323320379406, 3490965594592278910, 16005516994917231875]

    def test_fisher_yates_from_words(self):
        words = np.random.Philox(key=7).random_raw(5).tolist()
        expected = list(range(6))
        for t, i in enumerate(range(5, 0, -1)):
            j = words[t] % (i + 1)
            expected[i], expected[j] = expected[j], expected[i]
        got = data.shuffle_indices(np.arange(6), np.random.Philox(key=7))
        assert got.tolist() == expected == [1, 3, 2, 4, 5, 0]

    def test_wdbc_sizes(self, wdbc):
        sp = data.split(wdbc, 42, 0.2)
        # ceil rule: ceil(0.2 * 212) + ceil(0.2 * 357) = 43 + 72
        assert sp.test.size == 115
        assert int(wdbc.labels[sp.test].sum()) == 43
        assert sp.train.size == 454

    def test_frozen_seed42_prefix(self, wdbc):
        assert data.split(wdbc, 42, 0.2).test[:8].tolist() == [0, 25, 28, 33, 34, 37, 38, 39]

    def test_partition(self, wdbc):
        sp = data.split(wdbc, 3, 0.25)
        assert np.intersect1d(sp.train, sp.test).size == 0
        np.testing.assert_array_equal(np.union1d(sp.train, sp.test), np.arange(569))

    def test_deterministic(self, wdbc):
        a, b = data.split(wdbc, 11), data.split(wdbc, 11)
        np.testing.assert_array_equal(a.test, b.test)
        assert not np.array_equal(a.test, data.split(wdbc, 12).test)

    @pytest.mark.parametrize("f", [0.1, 0.2, 0.33, 0.5])
    def test_stratified(self, wdbc, f):
        sp = data.split(wdbc, 0, f)
        for label in (0, 1):
            n_c = int((wdbc.labels == label).sum())
            in_test = int((wdbc.labels[sp.test] == label).sum())
            assert abs(in_test - f * n_c) <= 1

    def test_exact_integer_products(self):
        # f * n = 3 exactly in real arithmetic; float error must not round up
        assert data._n_test(0.1, 30) == 3

    @pytest.mark.parametrize("f", [0.0, 1.0, -0.2, 1.5])
    def test_fraction_range(self, wdbc, f):
        with pytest.raises(ValueError):
            data.split(wdbc, 0, f)


class TestStandardize:
    def test_training_moments(self, wdbc_split):
        ds, sp = wdbc_split
        tr = ds.features[sp.train]
        assert np.abs(tr.mean(axis=0)).max() <= 1e-10
        assert np.abs(tr.std(axis=0) - 1).max() <= 1e-10

    def test_refit_is_identity(self, wdbc_split):
        ds, sp = wdbc_split
        again = data.standardize(ds, sp)
        assert np.abs(again.standardization.mean).max() <= 1e-10
        assert np.abs(again.standardization.std - 1).max() <= 1e-10

    def test_uses_training_rows_only(self):
        # 6-row fixture, column 0 values 1..6, rows 0-3 train, 4-5 test
        feats = np.zeros((6, 30))
        feats[:, 0] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        feats[:, 1] = [1.0, 1.0, 1.0, 1.0, 9.0, 9.0]
        ds = data.Dataset(feats, np.array([0, 1, 0, 1, 0, 1]), tuple("abcdef"))
        sp = data.SplitIndices(np.arange(4), np.array([4, 5]), 0, 1 / 3)
        out = data.standardize(ds, sp)
        # train mean 2.5, population std sqrt(1.25)
        s = math.sqrt(1.25)
        np.testing.assert_allclose(out.features[:, 0], [(v - 2.5) / s for v in range(1, 7)], rtol=1e-14)
        assert out.features[4, 0] == pytest.approx(2.5 / s)
        # constant training column: centred, unscaled, reported
        assert 1 in out.standardization.degenerate
        np.testing.assert_array_equal(out.features[:, 1], [0, 0, 0, 0, 8, 8])

    def test_bad_indices(self, wdbc):
        sp = data.SplitIndices(np.array([0, 1]), np.array([600]), 0, 0.5)
        with pytest.raises(ValueError):
            data.standardize(wdbc, sp)


class TestManifest:
    def test_roundtrip(self, wdbc, tmp_path):
        sp = data.split(wdbc, 42)
        p = tmp_path / "split.csv"
        data.write_manifest(sp, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "index,role"
        assert len(lines) == 570
        back = data.read_manifest(p)
        np.testing.assert_array_equal(back.train, sp.train)
        np.testing.assert_array_equal(back.test, sp.test)
