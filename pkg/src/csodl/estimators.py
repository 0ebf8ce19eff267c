"""scikit-learn style wrappers so the codec composes with pipelines.

``OnlineDictionaryLearner`` is the fit/transform face of the training loop
(rows of X are epochs); ``CompressiveSensingCodec`` turns a basis plus a
binary sensing matrix into a transform (encode) / inverse_transform
(reconstruct) pair.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .bases import joint_basis
from .core import Dictionary, Epoch, Measurements, SolverConfig
from .odl import OdlConfig, init_dictionary, standardize_training_epochs, train
from .sensing import generate_sensing_matrix
from .solvers import basis_pursuit_reconstruct, sparse_code


class OnlineDictionaryLearner(BaseEstimator, TransformerMixin):
    """Learn a personalized overcomplete dictionary from signal epochs.

    Parameters
    ----------
    n_atoms : dictionary size k; at most n_samples epochs are drawn to
        initialize it, so n_atoms must not exceed the training set size.
    alpha : l1 weight of the per-sample sparse coding problem.
    batch_size, n_passes, update_sweeps, random_state : loop controls,
        forwarded to the training configuration.
    standardize : remove each epoch's mean and rescale by the pooled std
        before coding (the constants are kept for transform).
    """

    def __init__(self, n_atoms=64, alpha=0.12, batch_size=1, n_passes=5,
                 update_sweeps=1, random_state=0, standardize=True):
        self.n_atoms = n_atoms
        self.alpha = alpha
        self.batch_size = batch_size
        self.n_passes = n_passes
        self.update_sweeps = update_sweeps
        self.random_state = random_state
        self.standardize = standardize

    def _config(self) -> OdlConfig:
        return OdlConfig(lam=self.alpha, batch_size=self.batch_size,
                         passes=self.n_passes, update_sweeps=self.update_sweeps,
                         seed=self.random_state)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.n_atoms > X.shape[0]:
            raise ValueError(
                f"n_atoms={self.n_atoms} exceeds the {X.shape[0]} available epochs")
        epochs = [Epoch(row) for row in X]
        if self.standardize:
            epochs, scale = standardize_training_epochs(epochs)
        else:
            scale = 1.0
        d0 = init_dictionary(epochs, self.n_atoms, self.random_state)
        d0 = Dictionary(d0.atoms, scale=scale, seeds=d0.seeds)
        dictionary, report = train(epochs, d0, self._config())
        self.dictionary_ = Dictionary(dictionary.atoms, scale=scale,
                                      seeds=dictionary.seeds)
        self.report_ = report
        self.scale_ = scale
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Sparse codes of each row against the learned atoms, shape (n, k)."""
        check_is_fitted(self, "dictionary_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features")
        cfg = SolverConfig(lam=self.alpha)
        out = np.zeros((X.shape[0], self.dictionary_.k))
        for i, row in enumerate(X):
            if self.standardize:
                row = (row - row.mean()) / self.scale_
            out[i] = sparse_code(row, self.dictionary_, cfg).code.to_dense()
        return out

    def inverse_transform(self, codes):
        check_is_fitted(self, "dictionary_")
        codes = check_array(codes, dtype=np.float64)
        return codes @ self.dictionary_.atoms.T


class CompressiveSensingCodec(BaseEstimator, TransformerMixin):
    """Binary random projection encoder with l1-minimization decoding.

    ``transform`` maps epochs (rows) to measurement vectors; the fitted
    sensing matrix is regenerated from (n_measurements, n features, seed).
    ``inverse_transform`` recovers epochs through the configured basis:
    either a learned :class:`Dictionary` (a DC atom is appended so raw-epoch
    means survive the round trip) or the pre-determined DCT-DWT pair.
    """

    def __init__(self, n_measurements=26, dictionary=None, sensing_seed=0,
                 ones_probability=0.5, epsilon=0.0, wavelet="db4",
                 dwt_levels=4, max_iterations=20000, convergence_tol=1e-8,
                 add_dc_atom=True):
        self.n_measurements = n_measurements
        self.dictionary = dictionary
        self.sensing_seed = sensing_seed
        self.ones_probability = ones_probability
        self.epsilon = epsilon
        self.wavelet = wavelet
        self.dwt_levels = dwt_levels
        self.max_iterations = max_iterations
        self.convergence_tol = convergence_tol
        self.add_dc_atom = add_dc_atom

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n = X.shape[1]
        self.phi_ = generate_sensing_matrix(self.n_measurements, n,
                                            self.sensing_seed,
                                            self.ones_probability)
        if self.dictionary is None:
            self.basis_ = Dictionary(joint_basis(n, self.wavelet, self.dwt_levels))
        else:
            d = self.dictionary
            if not isinstance(d, Dictionary):
                d = Dictionary(np.asarray(d, dtype=np.float64))
            if d.n != n:
                raise ValueError(f"dictionary n={d.n} != data width {n}")
            self.basis_ = d.with_dc_atom() if self.add_dc_atom else d
        self.n_features_in_ = n
        return self

    def transform(self, X):
        check_is_fitted(self, "phi_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features")
        return X @ self.phi_.entries.T

    def inverse_transform(self, Y):
        check_is_fitted(self, "phi_")
        Y = check_array(Y, dtype=np.float64)
        if Y.shape[1] != self.phi_.m:
            raise ValueError(f"expected {self.phi_.m} measurements per row")
        cfg = SolverConfig(lam=0.12, epsilon=self.epsilon,
                           max_iterations=self.max_iterations,
                           convergence_tol=self.convergence_tol)
        out = np.zeros((Y.shape[0], self.n_features_in_))
        for i, row in enumerate(Y):
            y = Measurements(values=row, phi_seed=self.phi_.seed,
                             phi_shape=(self.phi_.m, self.phi_.n))
            epoch, _code = basis_pursuit_reconstruct(y, self.phi_, self.basis_, cfg)
            out[i] = epoch.samples
        return out
