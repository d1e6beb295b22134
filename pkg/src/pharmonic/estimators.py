"""scikit-learn style wrapper around :func:`approximate`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .approximation import ApproxConfig, Target, approximate, builtin_target
from .core import Params


class PHarmonicApproximator(BaseEstimator):
    """Approximate a target in C^k(B_1) by a combination of p-harmonic atoms.

    ``fit`` takes the target instead of samples: a :class:`Target`, a builtin
    name such as ``"exp(x1)"``, or a plain callable on (n, d) arrays (its
    derivatives then come from finite differences). After fitting, ``atoms_``
    holds the atom sum and ``report_`` the full approximation report.
    """

    def __init__(self, s=0.5, p=2.0, d=1, k=0, eps=0.1, seed=0, max_degree=10, resolution=None, shrink="auto"):
        self.s = s
        self.p = p
        self.d = d
        self.k = k
        self.eps = eps
        self.seed = seed
        self.max_degree = max_degree
        self.resolution = resolution
        self.shrink = shrink

    def _target(self, f) -> Target:
        if isinstance(f, Target):
            return f
        if isinstance(f, str):
            return builtin_target(f, self.d)
        if callable(f):
            return Target(f, self.d, None, getattr(f, "__name__", "callable"))
        raise TypeError("target must be a Target, a builtin name or a callable")

    def fit(self, f, y=None):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError("k must be a non-negative integer")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        params = Params(self.s, self.p, self.d)
        config = ApproxConfig(max_degree=self.max_degree, resolution=self.resolution, seed=self.seed,
                              shrink=self.shrink)
        self.report_ = approximate(self._target(f), int(self.k), float(self.eps), params, config)
        self.atoms_ = self.report_.atoms
        self.scale_ = self.report_.scale
        self.n_features_in_ = self.d
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "atoms_")
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.atoms_(X)

    def derivative(self, alpha, X) -> np.ndarray:
        check_is_fitted(self, "atoms_")
        X = check_array(X)
        return self.atoms_.derivative(tuple(alpha), X)

    def score(self, f=None, y=None) -> float:
        """Negative measured C^k error of the fit (higher is better)."""
        check_is_fitted(self, "report_")
        return -self.report_.measured_ck_error
