"""Mercer kernels used by the spectral estimator.

Each kernel evaluates Gram blocks ``K(X, Y)`` for row-stacked points and, when
available in closed form, the gradient bound ``L(x) = sup_z |grad_z K(x, z)|``
that enters the Lipschitz bound of the estimator.
"""

import numpy as np

from .errors import ConfigError, UnsupportedKernelError


def _rows(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def as_query(x, d):
    """Reshape a query to ``(n, d)``; also report whether it was a single point.

    For ``d == 1`` a flat array of length > 1 is read as a stack of scalars.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if d == 1 and x.size != 1:
            return x.reshape(-1, 1), False
        return x.reshape(1, d), True
    return x.reshape(-1, d), False


class Kernel:
    name = "abstract"
    #: C with K(x, x) <= C (1 + |x|^2), or None when unknown
    linear_growth = None

    def __call__(self, X, Y):
        raise NotImplementedError

    def eval(self, x, y):
        return float(self(np.atleast_1d(x)[None, :], np.atleast_1d(y)[None, :])[0, 0])

    def diag(self, X):
        X = _rows(X)
        return np.array([self.eval(x, x) for x in X])

    def grad_sup(self, X):
        raise UnsupportedKernelError(f"kernel '{self.name}' has no closed-form gradient bound")

    @property
    def params(self):
        return {}

    def to_dict(self):
        return {"name": self.name, **self.params}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"


class ConstantKernel(Kernel):
    name = "constant"

    def __init__(self, value=1.0):
        if not value > 0:
            raise ConfigError("constant kernel value must be positive")
        self.value = float(value)
        self.linear_growth = self.value

    def __call__(self, X, Y):
        return np.full((_rows(X).shape[0], _rows(Y).shape[0]), self.value)

    def diag(self, X):
        return np.full(_rows(X).shape[0], self.value)

    def grad_sup(self, X):
        return np.zeros(_rows(X).shape[0])

    def features(self, X):
        return np.full((_rows(X).shape[0], 1), np.sqrt(self.value))

    @property
    def params(self):
        return {"value": self.value}


class PolynomialKernel(Kernel):
    """Degree-1 polynomial kernel ``x^T y + offset`` (offset > 0)."""

    name = "poly1"

    def __init__(self, offset=1.0):
        if not offset > 0:
            raise ConfigError("poly1 offset must be positive")
        self.offset = float(offset)
        self.linear_growth = max(1.0, self.offset)

    def __call__(self, X, Y):
        return _rows(X) @ _rows(Y).T + self.offset

    def diag(self, X):
        X = _rows(X)
        return np.einsum("ij,ij->i", X, X) + self.offset

    def grad_sup(self, X):
        # grad_z (x^T z + c) = x for every z
        return np.linalg.norm(_rows(X), axis=1)

    def features(self, X):
        """Explicit map with ``K(x, y) = features(x) . features(y)``."""
        X = _rows(X)
        return np.hstack([X, np.full((X.shape[0], 1), np.sqrt(self.offset))])

    @property
    def params(self):
        return {"offset": self.offset}


class GaussianKernel(Kernel):
    """``exp(-|x - y|^2 / (2 h^2))`` with bandwidth ``h``."""

    name = "rbf"
    linear_growth = 1.0

    def __init__(self, bandwidth=1.0):
        if not bandwidth > 0:
            raise ConfigError("rbf bandwidth must be positive")
        self.bandwidth = float(bandwidth)

    def __call__(self, X, Y):
        X, Y = _rows(X), _rows(Y)
        sq = (
            np.einsum("ij,ij->i", X, X)[:, None]
            + np.einsum("ij,ij->i", Y, Y)[None, :]
            - 2.0 * X @ Y.T
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * self.bandwidth**2))

    def diag(self, X):
        return np.ones(_rows(X).shape[0])

    def grad_sup(self, X):
        # |grad_z K| = r/h^2 exp(-r^2/2h^2), maximal at r = h
        return np.full(_rows(X).shape[0], np.exp(-0.5) / self.bandwidth)

    @property
    def params(self):
        return {"bandwidth": self.bandwidth}


KERNELS = {k.name: k for k in (ConstantKernel, PolynomialKernel, GaussianKernel)}


def make_kernel(name, **params):
    try:
        cls = KERNELS[name]
    except KeyError:
        raise ConfigError(f"unknown kernel '{name}' (known: {', '.join(KERNELS)})") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for kernel '{name}': {exc}") from None


def kernel_from_dict(spec):
    spec = dict(spec)
    return make_kernel(spec.pop("name"), **spec)
