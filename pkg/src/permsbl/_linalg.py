"""Dense linear-algebra helpers: PSD Cholesky solves with a jitter retry."""

import functools
import warnings

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from threadpoolctl import threadpool_limits

from .errors import NumericalError

LOG_2PI = float(np.log(2.0 * np.pi))


def serial_blas(func):
    """Run the wrapped solver with BLAS capped at one thread.

    The EM loops are dominated by many small factorizations and products;
    multi-threaded BLAS pays more in pool synchronization than it gains on
    matrices this size. Trials parallelize at the process level instead.
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        with threadpool_limits(limits=1, user_api="blas"):
            return func(*args, **kwargs)

    return wrapper


def chol_psd(a, jitter_scale=1e-10, warn_label=None):
    """Cholesky-factor a symmetric PSD matrix, retrying once with diagonal jitter.

    The jitter is ``jitter_scale * trace(a)/n``. Returns ``(factor, jittered)``
    where ``factor`` is the pair accepted by ``cho_solve``. Raises
    NumericalError if the retry also fails.
    """
    try:
        return cho_factor(a, lower=True, check_finite=False), False
    except LinAlgError:
        pass
    n = a.shape[0]
    jitter = jitter_scale * max(float(np.trace(a)) / n, np.finfo(float).tiny)
    if warn_label is not None:
        warnings.warn(
            f"{warn_label}: matrix not positive definite, retrying with "
            f"jitter {jitter:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    try:
        factor = cho_factor(a + jitter * np.eye(n), lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NumericalError(
            f"Cholesky factorization failed even with jitter {jitter:.3e}"
        ) from exc
    return factor, True


def psd_solve(factor, b):
    """Solve ``a x = b`` given a factor from :func:`chol_psd`."""
    return cho_solve(factor, b, check_finite=False)


def chol_logdet(factor):
    """log det of the factored matrix."""
    c, _ = factor
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def symmetrize(a):
    """(a + a^T)/2; makes ``a - a^T`` exactly zero afterwards."""
    return 0.5 * (a + a.T)
