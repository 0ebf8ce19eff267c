import numpy as np
import pytest
from sklearn.base import clone

from conftest import random_unit_dictionary
from csodl.core import prd
from csodl.data import synthetic_ecg
from csodl.estimators import CompressiveSensingCodec, OnlineDictionaryLearner


@pytest.fixture(scope="module")
def epoch_matrix():
    sig = synthetic_ecg(64 * 260, fs=360.0, seed=5)
    return sig.reshape(-1, 64)


class TestLearner:
    def test_get_set_params_round_trip(self):
        est = OnlineDictionaryLearner(n_atoms=12, alpha=0.2)
        params = est.get_params()
        assert params["n_atoms"] == 12 and params["alpha"] == 0.2
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_fit_transform_shapes(self, epoch_matrix):
        X = epoch_matrix[:80]
        est = OnlineDictionaryLearner(n_atoms=32, n_passes=1, random_state=1)
        codes = est.fit(X).transform(X[:10])
        assert codes.shape == (10, 32)
        assert est.dictionary_.n == 64 and est.dictionary_.k == 32
        assert np.isfinite(codes).all()

    def test_codes_are_sparse_and_reconstructive(self, epoch_matrix):
        X = epoch_matrix[:80]
        est = OnlineDictionaryLearner(n_atoms=32, n_passes=2, random_state=1)
        est.fit(X)
        codes = est.transform(X[:20])
        nnz = (codes != 0).sum(axis=1)
        assert nnz.mean() < 16
        recon = est.inverse_transform(codes)
        # standardized-domain comparison: codes model the demeaned epochs
        Xs = (X[:20] - X[:20].mean(axis=1, keepdims=True)) / est.scale_
        rel = np.linalg.norm(recon - Xs) / np.linalg.norm(Xs)
        assert rel < 0.5

    def test_rejects_more_atoms_than_epochs(self, epoch_matrix):
        est = OnlineDictionaryLearner(n_atoms=999)
        with pytest.raises(ValueError):
            est.fit(epoch_matrix[:50])

    def test_deterministic(self, epoch_matrix):
        X = epoch_matrix[:60]
        a = OnlineDictionaryLearner(n_atoms=16, n_passes=1, random_state=3).fit(X)
        b = OnlineDictionaryLearner(n_atoms=16, n_passes=1, random_state=3).fit(X)
        np.testing.assert_array_equal(a.dictionary_.atoms, b.dictionary_.atoms)


class TestCodec:
    def test_transform_matches_sensing_matrix(self, epoch_matrix, rng):
        X = epoch_matrix[:6]
        codec = CompressiveSensingCodec(n_measurements=16, sensing_seed=4).fit(X)
        Y = codec.transform(X)
        assert Y.shape == (6, 16)
        np.testing.assert_allclose(Y, X @ codec.phi_.entries.T)

    def test_round_trip_with_joint_basis(self, epoch_matrix):
        X = epoch_matrix[:6]
        codec = CompressiveSensingCodec(n_measurements=32, sensing_seed=4).fit(X)
        recon = codec.inverse_transform(codec.transform(X))
        prds = [prd(x, r) for x, r in zip(X, recon)]
        assert np.mean(prds) < 35.0

    def test_round_trip_with_learned_dictionary(self, epoch_matrix):
        train, test = epoch_matrix[:160], epoch_matrix[160:166]
        learner = OnlineDictionaryLearner(n_atoms=96, n_passes=2,
                                          random_state=2).fit(train)
        codec = CompressiveSensingCodec(
            n_measurements=16, dictionary=learner.dictionary_,
            sensing_seed=4).fit(test)
        recon = codec.inverse_transform(codec.transform(test))
        prds_t = [prd(x, r) for x, r in zip(test, recon)]
        joint = CompressiveSensingCodec(n_measurements=16, sensing_seed=4).fit(test)
        recon_j = joint.inverse_transform(joint.transform(test))
        prds_j = [prd(x, r) for x, r in zip(test, recon_j)]
        assert np.mean(prds_t) < np.mean(prds_j)

    def test_dimension_checks(self, epoch_matrix):
        codec = CompressiveSensingCodec(n_measurements=8).fit(epoch_matrix[:4])
        with pytest.raises(ValueError):
            codec.transform(np.zeros((2, 32)))
        with pytest.raises(ValueError):
            codec.inverse_transform(np.zeros((2, 9)))
        with pytest.raises(ValueError):
            CompressiveSensingCodec(
                n_measurements=8,
                dictionary=random_unit_dictionary(32, 8, 0)).fit(epoch_matrix[:4])

    def test_clone_compatible(self):
        codec = CompressiveSensingCodec(n_measurements=5, epsilon=0.1)
        assert clone(codec).get_params() == codec.get_params()
