"""Heat kernel of Brownian motion on the circle.

The kernel is the transition density (w.r.t. ``dx`` on ``[0, 2pi)``) of a
diffusion with generator ``d^2/dx^2``::

    K_t(d) = (1/2pi) (1 + 2 sum_{n>=1} exp(-n^2 t) cos(n d))
           = (4 pi t)^(-1/2) sum_{n in Z} exp(-(d - 2 pi n)^2 / (4 t))

i.e. a wrapped Gaussian of variance ``2t``. Both series are implemented;
each is used on the side of the crossover ``t = pi`` where it converges
faster.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * np.pi
CROSSOVER_TIME = np.pi
TRUNCATION = 1e-16
MAX_TERMS = 64

__all__ = [
    "TWO_PI",
    "CROSSOVER_TIME",
    "wrap_angle",
    "circular_distance",
    "kernel_density",
    "kernel_density_fourier",
    "kernel_density_wrapped",
    "log_kernel",
    "kernel_cdf",
    "sample_increment",
    "kernel_fluctuation",
    "effective_field",
]


def wrap_angle(x):
    """Map angles to ``[0, 2pi)``.

    ``np.mod`` alone can return exactly ``2pi`` for tiny negative inputs;
    those are folded back to 0.
    """
    r = np.mod(x, TWO_PI)
    if np.ndim(r) == 0:
        return float(r) if r < TWO_PI else 0.0
    r[r >= TWO_PI] = 0.0
    return r


def circular_distance(a, b):
    """Circular distance ``min(|a-b|, 2pi-|a-b|)`` in ``[0, pi]``."""
    d = np.remainder(np.abs(np.asarray(a, dtype=float) - b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def _reduced(delta):
    # |delta| first so that K(d) and K(-d) follow a bit-identical path.
    d = np.remainder(np.abs(np.asarray(delta, dtype=float)), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise DomainError(f"kernel time must be finite and > 0, got {t!r}")
    return t


def _fourier_terms(t_min):
    # smallest N with exp(-(N+1)^2 t_min) < TRUNCATION
    n = 1
    while math.exp(-((n + 1) ** 2) * t_min) >= TRUNCATION:
        n += 1
        assert n < MAX_TERMS, "Fourier series truncation cap reached"
    return n


def _gauss_terms(t_max):
    # images n = 0, +-1, ..., +-N; for |d| <= pi the n-th image is
    # bounded by exp(-(pi (2n - 1))^2 / (4 t))
    n = 0
    while math.exp(-((np.pi * (2 * n + 1)) ** 2) / (4.0 * t_max)) >= TRUNCATION:
        n += 1
        assert n < MAX_TERMS, "wrapped-Gaussian truncation cap reached"
    return n


def _fourier_tail(d, t):
    """``2 sum_{n>=1} exp(-n^2 t) cos(n d)`` for reduced ``d``."""
    nmax = _fourier_terms(float(np.min(t)))
    n = np.arange(1, nmax + 1, dtype=float)
    d = np.asarray(d)[..., None]
    t = np.asarray(t)[..., None]
    return 2.0 * np.sum(np.exp(-(n * n) * t) * np.cos(n * d), axis=-1)


def _gauss_log_terms(d, t):
    nmax = _gauss_terms(float(np.max(t)))
    n = np.arange(-nmax, nmax + 1, dtype=float)
    d = np.asarray(d)[..., None]
    t = np.asarray(t)[..., None]
    return -((d - TWO_PI * n) ** 2) / (4.0 * t) - 0.5 * np.log(4.0 * np.pi * t)


def kernel_density_fourier(delta, t):
    """Fourier-series evaluation of ``K_t``, valid (and used) for any ``t > 0``."""
    t = _check_time(t)
    d = _reduced(delta)
    d, t = np.broadcast_arrays(d, t)
    return (1.0 + _fourier_tail(d, t)) / TWO_PI


def kernel_density_wrapped(delta, t):
    """Wrapped-Gaussian (image sum) evaluation of ``K_t``."""
    t = _check_time(t)
    d = _reduced(delta)
    d, t = np.broadcast_arrays(d, t)
    return np.sum(np.exp(_gauss_log_terms(d, t)), axis=-1)


def _dispatch(delta, t, fourier, gauss):
    t = _check_time(t)
    d = _reduced(delta)
    d, t = np.broadcast_arrays(d, t)
    out = np.empty(d.shape, dtype=float)
    hi = t >= CROSSOVER_TIME
    if np.any(hi):
        out[hi] = fourier(d[hi], t[hi])
    lo = ~hi
    if np.any(lo):
        out[lo] = gauss(d[lo], t[lo])
    return out if out.ndim else float(out)


def kernel_density(delta, t):
    """Density ``K_t(delta)`` of a circle Brownian increment after time ``t``.

    Parameters
    ----------
    delta : float or array_like
        Angle difference(s); any real value, reduced modulo ``2pi``.
    t : float or array_like
        Diffusion time(s), ``t > 0``. Broadcast against ``delta``.

    Returns
    -------
    float or np.ndarray
        Density w.r.t. Lebesgue measure on ``[0, 2pi)``.
    """
    return _dispatch(
        delta,
        t,
        lambda d, s: (1.0 + _fourier_tail(d, s)) / TWO_PI,
        lambda d, s: np.sum(np.exp(_gauss_log_terms(d, s)), axis=-1),
    )


def _log_gauss(d, t):
    terms = _gauss_log_terms(d, t)
    top = np.max(terms, axis=-1)
    return top + np.log(np.sum(np.exp(terms - top[..., None]), axis=-1))


def log_kernel(delta, t):
    """``ln K_t(delta)``; uses ``log1p`` of the Fourier tail for large ``t``."""
    return _dispatch(
        delta,
        t,
        lambda d, s: np.log1p(_fourier_tail(d, s)) - np.log(TWO_PI),
        _log_gauss,
    )


def kernel_cdf(x, t):
    """``int_0^x K_t(u) du`` for ``x`` in ``[0, 2pi]`` (Fourier form, closed).

    Used by the statistical tests; converges for every ``t > 0`` although
    slowly for very small ``t``.
    """
    t = float(_check_time(t))
    x = np.asarray(x, dtype=float)
    nmax = max(_fourier_terms(t), 1)
    n = np.arange(1, nmax + 1, dtype=float)
    tail = np.sum(np.exp(-n * n * t) * np.sin(n * x[..., None]) / n, axis=-1)
    return (x + 2.0 * tail) / TWO_PI


def sample_increment(t, rng, size=None):
    """Draw circle-Brownian increments over time ``t``, wrapped to ``[0, 2pi)``.

    ``t = 0`` gives exactly 0 (the degenerate kernel).
    """
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise DomainError(f"time must be finite and >= 0, got {t!r}")
    if t == 0.0:
        return 0.0 if size is None else np.zeros(size)
    return wrap_angle(rng.normal(0.0, math.sqrt(2.0 * t), size=size))


def kernel_fluctuation(T):
    """Largest deviation ``sup_{t>=T, a, b} |2pi K_t(a-b) - 1|``.

    The supremum sits at ``t = T``, ``a = b`` and equals
    ``2 sum_{n>=1} exp(-n^2 T)``.
    """
    T = float(T)
    if not np.isfinite(T) or T <= 0:
        raise DomainError(f"T must be finite and > 0, got {T!r}")
    total = 0.0
    n = 1
    while True:
        term = math.exp(-n * n * T)
        if term < TRUNCATION and n > 1:
            break
        total += term
        n += 1
        assert n < MAX_TERMS, "fluctuation series truncation cap reached"
    return 2.0 * total


def effective_field(t):
    """Magnitude ``h(t) = 2 exp(-t)`` of the field induced by conditioning."""
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise DomainError(f"time must be finite and >= 0, got {t!r}")
    return 2.0 * math.exp(-t)
