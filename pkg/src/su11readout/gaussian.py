"""Gaussian states of bosonic modes and the channels acting on them.

Conventions
-----------
Quadratures are ordered ``x1, p1, x2, p2, ...`` with ``x = (a + a^dag)/sqrt(2)``
and ``p = (a - a^dag)/(i sqrt(2))``, so the vacuum has variance 1/2 in every
quadrature. A complex field amplitude ``alpha`` displaces a mode by
``(sqrt(2) Re alpha, sqrt(2) Im alpha)``.

States are immutable; every operation returns a new :class:`GaussianState`.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

PHYSICAL_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianState:
    """First and second moments of an n-mode Gaussian state."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean)
        cov = _frozen(self.cov)
        if mean.ndim != 1 or mean.size % 2 or mean.size == 0:
            raise InvalidArgument(f"mean must be a non-empty vector of even length, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise InvalidArgument(f"cov shape {cov.shape} inconsistent with mean length {mean.size}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidArgument("state moments must be finite")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise InvalidArgument("cov must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self):
        return self.mean.size // 2


def symplectic_form(n_modes):
    """Return the 2n x 2n symplectic form for xpxp ordering."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def is_symplectic(S, tol=1e-10):
    n = S.shape[0] // 2
    omega = symplectic_form(n)
    return bool(np.max(np.abs(S @ omega @ S.T - omega)) <= tol)


def vacuum_state(n_modes):
    if int(n_modes) != n_modes or n_modes < 1:
        raise InvalidArgument(f"n_modes must be a positive integer, got {n_modes!r}")
    n_modes = int(n_modes)
    return GaussianState(np.zeros(2 * n_modes), 0.5 * np.eye(2 * n_modes))


def thermal_state(n_modes, nbar):
    """Uncorrelated thermal state with ``nbar`` photons in every mode."""
    if not nbar >= 0:
        raise InvalidArgument(f"thermal occupation must be >= 0, got {nbar!r}")
    vac = vacuum_state(n_modes)
    return GaussianState(vac.mean, (2 * nbar + 1) * vac.cov)


def _check_mode(state, i):
    if not isinstance(i, (int, np.integer)) or not 0 <= i < state.n_modes:
        raise InvalidArgument(f"mode index {i!r} out of range for {state.n_modes}-mode state")
    return int(i)


def _check_real(name, value):
    if not np.isfinite(value):
        raise InvalidArgument(f"{name} must be finite, got {value!r}")


def rotation_matrix(theta):
    """Quadrature rotation implementing ``a -> exp(i theta) a``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def two_mode_squeeze_matrix(r, phi):
    """4x4 symplectic matrix of a phase-preserving amplifier / two-mode squeezer.

    Implements ``a -> cosh(r) a + exp(i phi) sinh(r) b^dag`` and
    ``b^dag -> cosh(r) b^dag + exp(-i phi) sinh(r) a`` on the ordered
    quadratures ``(x_a, p_a, x_b, p_b)``.
    """
    ch, sh = np.cosh(r), np.sinh(r)
    refl = np.array([[np.cos(phi), np.sin(phi)], [np.sin(phi), -np.cos(phi)]])
    return np.block([[ch * np.eye(2), sh * refl], [sh * refl, ch * np.eye(2)]])


def embed(block, modes, n_modes):
    """Embed a symplectic block acting on ``modes`` into the full 2n space."""
    idx = np.concatenate([[2 * m, 2 * m + 1] for m in modes])
    S = np.eye(2 * n_modes)
    S[np.ix_(idx, idx)] = block
    return S


def apply_symplectic(state, S):
    return GaussianState(S @ state.mean, S @ state.cov @ S.T)


def two_mode_squeeze(state, i, j, r, phi):
    i, j = _check_mode(state, i), _check_mode(state, j)
    if i == j:
        raise InvalidArgument("two_mode_squeeze needs two distinct modes")
    _check_real("r", r)
    _check_real("phi", phi)
    if r < 0:
        raise InvalidArgument(f"squeezing r must be >= 0, got {r}")
    return apply_symplectic(state, embed(two_mode_squeeze_matrix(r, phi), [i, j], state.n_modes))


def phase_shift(state, i, theta):
    i = _check_mode(state, i)
    _check_real("theta", theta)
    return apply_symplectic(state, embed(rotation_matrix(theta), [i], state.n_modes))


def loss_channel(state, i, eta_t, n_env=0.0):
    """Beam-splitter loss on mode ``i`` with a thermal environment traced out."""
    i = _check_mode(state, i)
    if not 0.0 <= eta_t <= 1.0:
        raise InvalidArgument(f"transmission must lie in [0, 1], got {eta_t!r}")
    if not n_env >= 0:
        raise InvalidArgument(f"environment occupation must be >= 0, got {n_env!r}")
    X = np.eye(2 * state.n_modes)
    X[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] *= np.sqrt(eta_t)
    Y = np.zeros_like(X)
    Y[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = (1.0 - eta_t) * (n_env + 0.5) * np.eye(2)
    return GaussianState(X @ state.mean, X @ state.cov @ X.T + Y)


def displace(state, i, alpha):
    i = _check_mode(state, i)
    alpha = complex(alpha)
    if not np.isfinite(alpha):
        raise InvalidArgument(f"displacement must be finite, got {alpha!r}")
    mean = state.mean.copy()
    mean[2 * i] += np.sqrt(2) * alpha.real
    mean[2 * i + 1] += np.sqrt(2) * alpha.imag
    return GaussianState(mean, state.cov)


def marginal(state, i):
    """Mean 2-vector and 2x2 covariance block of mode ``i``."""
    i = _check_mode(state, i)
    sl = slice(2 * i, 2 * i + 2)
    return state.mean[sl].copy(), state.cov[sl, sl].copy()


def check_physical(state, tol=PHYSICAL_TOL):
    """True iff cov is symmetric and ``cov + (i/2) Omega`` is positive semidefinite."""
    cov = np.asarray(state.cov)
    if np.max(np.abs(cov - cov.T)) > tol * max(1.0, float(np.max(np.abs(cov)))):
        return False
    herm = cov + 0.5j * symplectic_form(cov.shape[0] // 2)
    return bool(np.min(np.linalg.eigvalsh(herm)) >= -tol)
