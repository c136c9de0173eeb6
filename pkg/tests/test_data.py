"""Generators, CSV loader, and stream preparation."""

import numpy as np
import pytest

from onlinevi.data import (
    CsvSchema,
    Dataset,
    StreamConfig,
    gen_iid_regression,
    gen_toy_classification,
    load_csv,
    prepare_stream,
)
from onlinevi.errors import DataError


class TestToyGenerator:
    def test_deterministic(self):
        a = gen_toy_classification(500, seed=3)
        b = gen_toy_classification(500, seed=3)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.targets, b.targets)

    def test_label_frequency_band(self):
        ds = gen_toy_classification(10 ** 4, seed=0)
        p_hat = float(np.mean(ds.targets > 0))
        band = 3.0 * np.sqrt((2.0 / 9.0) / 10 ** 4)   # 3 sigma of Be(2/3)
        assert abs(p_hat - 2.0 / 3.0) <= band

    def test_conditional_moments(self):
        ds = gen_toy_classification(10 ** 5, seed=1)
        pos = ds.features[ds.targets > 0]
        neg = ds.features[ds.targets < 0]
        np.testing.assert_allclose(pos.mean(axis=0), [1.0, 1.0], atol=0.03)
        np.testing.assert_allclose(neg.mean(axis=0), [-1.0, -1.0], atol=0.03)
        cov_pos = np.cov(pos.T)
        np.testing.assert_allclose(cov_pos, [[1.0, 1.0], [1.0, 3.0]], atol=0.05)
        np.testing.assert_allclose(np.cov(neg.T), np.eye(2), atol=0.05)

    def test_labels_are_pm1(self):
        ds = gen_toy_classification(100, seed=2)
        assert set(np.unique(ds.targets)) == {-1.0, 1.0}


class TestIidRegression:
    THETA = np.array([1.0, -0.5])

    def test_noiseless_exact(self):
        ds = gen_iid_regression(50, self.THETA, noise_sd=0.0, seed=0)
        np.testing.assert_allclose(ds.targets, ds.features @ self.THETA, atol=1e-15)

    def test_ols_recovery(self):
        ds = gen_iid_regression(10 ** 5, self.THETA, noise_sd=0.5, seed=1)
        fit, *_ = np.linalg.lstsq(ds.features, ds.targets, rcond=None)
        # per-coordinate 3 standard errors of the OLS estimator
        resid = ds.targets - ds.features @ fit
        sigma2 = resid @ resid / (ds.T - 2)
        cov = sigma2 * np.linalg.inv(ds.features.T @ ds.features)
        for j in range(2):
            assert abs(fit[j] - self.THETA[j]) <= 3.0 * np.sqrt(cov[j, j])

    def test_deterministic(self):
        a = gen_iid_regression(100, self.THETA, 0.3, seed=4)
        b = gen_iid_regression(100, self.THETA, 0.3, seed=4)
        np.testing.assert_array_equal(a.targets, b.targets)


class TestLoadCsv:
    def _write(self, tmp_path, text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_small_file_with_header(self, tmp_path):
        path = self._write(tmp_path, "a,b,label\n1.0,2.0,yes\n3.0,4.0,no\n")
        ds = load_csv(path, CsvSchema(label="label", positive_label="yes"))
        assert (ds.T, ds.d) == (2, 2)
        np.testing.assert_array_equal(ds.targets, [1.0, -1.0])
        np.testing.assert_allclose(ds.features, [[1.0, 2.0], [3.0, 4.0]])

    def test_headerless_by_index(self, tmp_path):
        path = self._write(tmp_path, "1.0,5.0\n2.0,7.0\n")
        ds = load_csv(path, CsvSchema(label=1, has_header=False))
        assert ds.task == "regression"
        np.testing.assert_allclose(ds.targets, [5.0, 7.0])

    def test_unparseable_cell_reports_position(self, tmp_path):
        path = self._write(tmp_path, "a,b\n1.0,oops\n")
        with pytest.raises(DataError, match="row 2, column 2"):
            load_csv(path, CsvSchema(label=0, has_header=True))

    def test_missing_value_is_error(self, tmp_path):
        path = self._write(tmp_path, "a,b\n1.0,\n")
        with pytest.raises(DataError, match="missing value"):
            load_csv(path, CsvSchema(label=0, has_header=True))

    def test_published_shape_audit_passes(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = ["f" + ",f".join(str(j) for j in range(30)) + ",diagnosis"]
        for i in range(569):
            label = "M" if i % 3 == 0 else "B"
            rows.append(",".join(f"{v:.3f}" for v in rng.normal(size=30)) + "," + label)
        path = self._write(tmp_path, "\n".join(rows) + "\n")
        ds = load_csv(path, CsvSchema(label="diagnosis", positive_label="M"),
                      name="breast-cancer")
        assert (ds.T, ds.d) == (569, 30)

    def test_published_shape_audit_fails_on_mismatch(self, tmp_path):
        path = self._write(tmp_path, "a,b,label\n1.0,2.0,yes\n")
        with pytest.raises(DataError, match="published"):
            load_csv(path, CsvSchema(label="label", positive_label="yes"),
                     name="Pima Indians")

    def test_alternative_delimiter(self, tmp_path):
        path = self._write(tmp_path, "a;b;y\n1.0;2.0;0.5\n")
        ds = load_csv(path, CsvSchema(label="y", delimiter=";"))
        assert ds.targets[0] == 0.5


class TestPrepareStream:
    def _dataset(self, n=50):
        rng = np.random.default_rng(5)
        feats = rng.normal(size=(n, 3))
        feats[:, 2] = 7.0  # constant feature for the zero-variance branch
        targets = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
        return Dataset(feats, targets, "classification", "unit-test")

    def test_identity(self):
        ds = self._dataset()
        out = prepare_stream(ds, StreamConfig(permute=False, standardize=False))
        np.testing.assert_array_equal(out.features, ds.features)
        np.testing.assert_array_equal(out.targets, ds.targets)

    def test_standardization_moments(self):
        out = prepare_stream(self._dataset(200),
                             StreamConfig(permute=False, standardize=True))
        means = out.features.mean(axis=0)
        sds = out.features.std(axis=0)
        assert np.max(np.abs(means)) <= 1e-10
        np.testing.assert_allclose(sds[:2], 1.0, atol=1e-10)
        assert sds[2] == 0.0  # constant feature centered only

    def test_permutation_is_bijection(self):
        ds = self._dataset(100)
        out = prepare_stream(ds, StreamConfig(seed=7, permute=True))
        key = lambda arr: sorted(map(tuple, arr))
        assert key(out.features) == key(ds.features)
        assert sorted(out.targets) == sorted(ds.targets)
        assert not np.array_equal(out.features, ds.features)

    def test_subsample_after_permutation(self):
        ds = self._dataset(100)
        out = prepare_stream(ds, StreamConfig(seed=7, permute=True, subsample=10))
        full = prepare_stream(ds, StreamConfig(seed=7, permute=True))
        np.testing.assert_array_equal(out.features, full.features[:10])
        assert out.T == 10

    def test_shape_and_labels_preserved(self):
        ds = self._dataset(60)
        out = prepare_stream(ds, StreamConfig(seed=1, permute=True, standardize=True))
        assert (out.T, out.d) == (ds.T, ds.d)
        assert set(np.unique(out.targets)) <= {-1.0, 1.0}

    def test_deterministic(self):
        ds = self._dataset(80)
        a = prepare_stream(ds, StreamConfig(seed=9, permute=True))
        b = prepare_stream(ds, StreamConfig(seed=9, permute=True))
        np.testing.assert_array_equal(a.features, b.features)


class TestDatasetValidation:
    def test_rejects_nan(self):
        with pytest.raises(DataError):
            Dataset(np.array([[np.nan]]), np.array([1.0]), "regression", "bad")

    def test_rejects_nonbinary_classification(self):
        with pytest.raises(DataError):
            Dataset(np.ones((2, 1)), np.array([1.0, 0.5]), "classification", "bad")
