"""Closed-form eigensystem of the 2x2 non-Hermitian mixing matrix.

The mixing matrix is ``H = E 1 + (R - i Gamma/2) . sigma``.  Its eigenvalues
are ``E -+ eps`` with ``eps**2 = (R - i Gamma/2) . (R - i Gamma/2)`` (no complex
conjugation).  State 1 always carries ``E - eps`` and state 2 ``E + eps``; the
sign of ``eps`` is fixed by branch continuation so labels stay attached to a
level along a path.

Right eigenvectors are columns, left eigenvectors are rows, and pairs are
scaled so that ``l_s @ r_s == 1``.  Nothing fixes the overall complex scale of
``r_s``; quantities computed downstream are invariant under ``r -> c r,
l -> l / c``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegeneratePointError, InvalidArgumentError

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

DEFAULT_DEGENERACY_TOL = 1e-10


def _as_vec3(value, name):
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise InvalidArgumentError(f"{name} must be a real 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} has non-finite components: {arr}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ParameterPoint:
    """A point of parameter space: driving vector, width vector, energy offset."""

    R: np.ndarray
    Gamma: np.ndarray
    E_offset: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "R", _as_vec3(self.R, "R"))
        object.__setattr__(self, "Gamma", _as_vec3(self.Gamma, "Gamma"))
        e = complex(self.E_offset)
        if not (np.isfinite(e.real) and np.isfinite(e.imag)):
            raise InvalidArgumentError(f"E_offset is not finite: {e}")
        object.__setattr__(self, "E_offset", e)

    @property
    def effective(self) -> np.ndarray:
        """Complex effective vector ``R - i Gamma / 2``."""
        return self.R - 0.5j * self.Gamma

    def epsilon_squared(self) -> complex:
        return complex(np.dot(self.R, self.R) - 0.25 * np.dot(self.Gamma, self.Gamma)
                       - 1j * np.dot(self.R, self.Gamma))


@dataclass(frozen=True)
class TwoLevelOperator:
    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.shape != (2, 2):
            raise InvalidArgumentError(f"expected a 2x2 matrix, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def trace(self) -> complex:
        return complex(self.entries[0, 0] + self.entries[1, 1])

    @property
    def traceless(self) -> np.ndarray:
        return self.entries - 0.5 * self.trace * np.eye(2)

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))


class Defect(enum.Enum):
    DIAGONALIZABLE = "Diagonalizable"
    JORDAN_RANK2 = "JordanRank2"
    DIAGONAL_DEGENERATE = "DiagonalDegenerate"


@dataclass(frozen=True)
class BiorthogonalFrame:
    """Eigenvalues plus right/left eigenvectors of a two-level operator.

    ``right_vectors[:, s-1]`` is the right eigenvector of state ``s`` and
    ``left_covectors[s-1, :]`` the matching left eigenvector.  At a
    degenerate point both are ``None`` and :meth:`right`/:meth:`left` raise.
    """

    eigenvalues: tuple
    epsilon: complex
    defect: Defect
    right_vectors: Optional[np.ndarray] = field(default=None, repr=False)
    left_covectors: Optional[np.ndarray] = field(default=None, repr=False)

    def _require(self):
        if self.defect is not Defect.DIAGONALIZABLE:
            raise DegeneratePointError(
                f"no eigenframe at a degenerate point ({self.defect.value})", defect=self.defect
            )

    def right(self, state: int) -> np.ndarray:
        self._require()
        return self.right_vectors[:, _state_index(state)]

    def left(self, state: int) -> np.ndarray:
        self._require()
        return self.left_covectors[_state_index(state), :]


def _state_index(state):
    if state not in (1, 2):
        raise InvalidArgumentError(f"state must be 1 or 2, got {state!r}")
    return state - 1


def build_hamiltonian(point: ParameterPoint) -> TwoLevelOperator:
    v = point.effective
    h = point.E_offset * np.eye(2, dtype=complex) + np.einsum("i,ijk->jk", v, SIGMA)
    return TwoLevelOperator(h)


def principal_sqrt(z):
    """Square root with Re >= 0, and Im >= 0 whenever Re == 0.

    ``numpy.sqrt`` returns ``-0.5j`` for ``-0.25 - 0j``; the signed zero is
    normalised away here.
    """
    s = np.sqrt(np.asarray(z, dtype=complex))
    flip = (s.real == 0) & (s.imag < 0)
    s = np.where(flip, -s, s)
    return s[()] if s.ndim == 0 else s


def nearest_root(principal, reference):
    """Pick ``+principal`` or ``-principal``, whichever is closer to ``reference``."""
    principal = np.asarray(principal)
    reference = np.asarray(reference)
    keep = np.abs(principal - reference) <= np.abs(principal + reference)
    out = np.where(keep, principal, -principal)
    return out[()] if out.ndim == 0 else out


def continue_branch(principal, start=None):
    """Continue a square-root branch along an ordered array of principal roots.

    Each entry is replaced by the root of the same square that lies closest
    to the previous (already continued) entry.  ``start`` seeds the first
    entry; by default the first principal root is kept.

    Returns
    -------
    roots : ndarray
        Continued roots.
    ambiguous : int
        Number of steps where both candidate roots were about equally close,
        i.e. the step was not small compared with the root itself.
    """
    s = np.asarray(principal, dtype=complex).reshape(-1)
    if s.size == 0:
        return s, 0
    d_same = np.abs(s[1:] - s[:-1])
    d_flip = np.abs(s[1:] + s[:-1])
    step_sign = np.where(d_same <= d_flip, 1.0, -1.0)
    first = 1.0
    if start is not None and abs(s[0] - start) > abs(s[0] + start):
        first = -1.0
    signs = first * np.concatenate(([1.0], np.cumprod(step_sign)))
    hi = np.maximum(d_same, d_flip)
    lo = np.minimum(d_same, d_flip)
    ambiguous = int(np.count_nonzero(lo > 0.5 * hi))
    return signs * s, ambiguous


def epsilon_at(point: ParameterPoint, previous: Optional[complex] = None) -> complex:
    """Half splitting ``eps`` with ``eps**2 = (R - i Gamma/2)**2``.

    Without ``previous`` the principal root is returned; otherwise the root
    nearest to ``previous``.
    """
    root = complex(principal_sqrt(point.epsilon_squared()))
    if previous is not None:
        root = complex(nearest_root(root, complex(previous)))
    return root


def _right_candidates(eta, xi, zeta, eps, state):
    if state == 1:
        return (xi, -(eta + eps)), (eta - eps, zeta)
    return (xi, eps - eta), (eta + eps, zeta)


def _left_candidates(eta, xi, zeta, eps, state):
    if state == 1:
        return (zeta, -(eta + eps)), (eta - eps, xi)
    return (zeta, eps - eta), (eta + eps, xi)


def _pick(cands, dtype):
    a, b = (np.array(c, dtype=dtype) for c in cands)
    # the two kernel candidates are parallel; keep the better conditioned one
    v = a if np.sum(np.abs(a) ** 2) >= np.sum(np.abs(b) ** 2) else b
    return v / np.sqrt(np.sum(np.abs(v) ** 2))


def _frame_pair(eta, xi, zeta, eps, state, dtype=complex):
    r = _pick(_right_candidates(eta, xi, zeta, eps, state), dtype)
    l = _pick(_left_candidates(eta, xi, zeta, eps, state), dtype)
    return r, l / (l @ r)


def batch_frames(R, gamma, eps, state):
    """Right and left eigenvectors of state ``state`` at many points at once.

    ``R`` has shape (n, 3), ``eps`` the matching (already branch-continued)
    splittings.  Same kernel construction and pivot rule as
    :func:`eigendecompose`; rows of the returned arrays satisfy ``l @ r = 1``.
    """
    _state_index(state)
    v = np.asarray(R, dtype=float) - 0.5j * np.asarray(gamma, dtype=float)
    eta, xi, zeta = v[:, 2], v[:, 0] - 1j * v[:, 1], v[:, 0] + 1j * v[:, 1]
    eps = np.asarray(eps, dtype=complex)

    def pick(cands):
        a, b = (np.column_stack(c) for c in cands)
        na = np.sum(np.abs(a) ** 2, axis=1)
        nb = np.sum(np.abs(b) ** 2, axis=1)
        out = np.where((na >= nb)[:, None], a, b)
        return out / np.sqrt(np.maximum(na, nb))[:, None]

    r = pick(_right_candidates(eta, xi, zeta, eps, state))
    l = pick(_left_candidates(eta, xi, zeta, eps, state))
    return r, l / np.sum(l * r, axis=1)[:, None]


def eigendecompose(
    H: TwoLevelOperator,
    point: Optional[ParameterPoint] = None,
    previous_epsilon: Optional[complex] = None,
    tol: float = DEFAULT_DEGENERACY_TOL,
) -> BiorthogonalFrame:
    """Biorthonormal eigenframe of a 2x2 operator.

    The splitting is read off ``H`` itself (``eps**2 = eta**2 + xi*zeta`` for
    the traceless part ``[[eta, xi], [zeta, -eta]]``); ``point`` is accepted
    for symmetry with the other constructors but is not needed.

    A point is treated as degenerate when ``|eps|**2 <= tol * ||H||**2``.
    The test is applied to ``eps**2`` because at a Jordan point rounding
    noise of size ``u`` in ``eps**2`` already produces ``|eps| ~ sqrt(u)``.
    """
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol}")
    if not isinstance(H, TwoLevelOperator):
        H = TwoLevelOperator(H)
    e0 = 0.5 * H.trace
    t = H.traceless
    eta, xi, zeta = t[0, 0], t[0, 1], t[1, 0]
    eps2 = eta * eta + xi * zeta
    eps = complex(principal_sqrt(eps2))
    if previous_epsilon is not None:
        eps = complex(nearest_root(eps, complex(previous_epsilon)))
    eigenvalues = (e0 - eps, e0 + eps)
    hnorm = H.norm()
    if abs(eps2) <= tol * hnorm ** 2:
        if np.linalg.norm(t) <= tol * hnorm:
            defect = Defect.DIAGONAL_DEGENERATE
        else:
            defect = Defect.JORDAN_RANK2
        return BiorthogonalFrame(eigenvalues, eps, defect)

    r1, l1 = _frame_pair(eta, xi, zeta, eps, 1)
    r2, l2 = _frame_pair(eta, xi, zeta, eps, 2)
    return BiorthogonalFrame(
        eigenvalues,
        eps,
        Defect.DIAGONALIZABLE,
        right_vectors=np.column_stack([r1, r2]),
        left_covectors=np.vstack([l1, l2]),
    )


def frame_at(point: ParameterPoint, previous_epsilon=None, tol=DEFAULT_DEGENERACY_TOL):
    """``eigendecompose(build_hamiltonian(point), ...)``, raising at degeneracies."""
    frame = eigendecompose(build_hamiltonian(point), point, previous_epsilon, tol)
    frame._require()
    return frame


def connection_identity_residual(point: ParameterPoint, state_s: int, state_m: int,
                                 step: float) -> float:
    """Finite-difference check of ``<l_s|d r_m> = <l_s|dH|r_m> / (E_m - E_s)``.

    Central differences along the three R directions.  Frames at displaced
    points are rescaled so that ``<l_m(center)|r_m(displaced)> = 1``, which
    makes the displaced frames a smooth gauge through the centre.  Frames are
    built in extended precision so that the O(step**2) truncation error, not
    cancellation, dominates at step ~ 1e-5.
    """
    i_s, i_m = _state_index(state_s), _state_index(state_m)
    if i_s == i_m:
        raise InvalidArgumentError("state_s and state_m must differ")
    if not step > 0:
        raise InvalidArgumentError(f"step must be positive, got {step}")

    eps2 = point.epsilon_squared()
    scale = float(np.linalg.norm(point.effective))
    # distance to the locus, to first order: |eps^2| / |grad eps^2|
    if scale == 0 or abs(eps2) / (2.0 * scale) < 100.0 * step:
        raise DegeneratePointError(
            "point is within the finite-difference stencil of the degeneracy locus",
            defect=Defect.JORDAN_RANK2 if scale else Defect.DIAGONAL_DEGENERATE,
        )

    cdt = np.clongdouble
    R = point.R.astype(np.longdouble)
    G = point.Gamma.astype(np.longdouble)
    half = np.longdouble(0.5)

    def traceless(Rv):
        v = Rv.astype(cdt) - cdt(1j) * half * G.astype(cdt)
        return v[2], v[0] - cdt(1j) * v[1], v[0] + cdt(1j) * v[1], v @ v

    eta, xi, zeta, e2 = traceless(R)
    eps_c = np.sqrt(e2)
    if eps_c.real < 0 or (eps_c.real == 0 and eps_c.imag < 0):
        eps_c = -eps_c
    frames_c = {s: _frame_pair(eta, xi, zeta, eps_c, s, cdt) for s in (1, 2)}
    r_m_c, l_m_c = frames_c[state_m]
    l_s_c = frames_c[state_s][1]
    energy = {1: -eps_c, 2: eps_c}
    h = np.longdouble(step)

    worst = 0.0
    for i in range(3):
        shifted = []
        for sign in (1, -1):
            Rd = R.copy()
            Rd[i] += sign * h
            eta_d, xi_d, zeta_d, e2_d = traceless(Rd)
            eps_d = np.sqrt(e2_d)
            if abs(eps_d + eps_c) < abs(eps_d - eps_c):
                eps_d = -eps_d
            r_d, _ = _frame_pair(eta_d, xi_d, zeta_d, eps_d, state_m, cdt)
            shifted.append(r_d / (l_m_c @ r_d))
        dr = (shifted[0] - shifted[1]) / (2 * h)
        lhs = l_s_c @ dr
        rhs = (l_s_c @ SIGMA[i].astype(cdt) @ r_m_c) / (energy[state_m] - energy[state_s])
        worst = max(worst, float(abs(lhs - rhs)))
    return worst


# --- gauge-fixed frames along paths -------------------------------------------------

def gamma_axes(gamma):
    """Right-handed axes ``(e1, e2, g_hat)`` with ``g_hat`` along Gamma, plus |Gamma|.

    ``e1, e2`` come from the minimal rotation taking z onto ``g_hat``; for
    Gamma = 0 the lab axes are returned.
    """
    gamma = np.asarray(gamma, dtype=float)
    gmag = float(np.linalg.norm(gamma))
    if gmag == 0.0:
        return np.eye(3), 0.0
    return _rotation_to(gamma / gmag), gmag


def _axis_angle_to(g_hat):
    z = np.array([0.0, 0.0, 1.0])
    axis = np.cross(z, g_hat)
    s = np.linalg.norm(axis)
    c = float(np.clip(g_hat[2], -1.0, 1.0))
    if s < 1e-15:
        return np.array([1.0, 0.0, 0.0]), (0.0 if c > 0 else np.pi)
    return axis / s, float(np.arctan2(s, c))


def _rotation_to(g_hat):
    n, theta = _axis_angle_to(g_hat)
    K = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


def spinor_rotation(gamma) -> np.ndarray:
    """SU(2) matrix ``U`` with ``U (a.sigma) U^dagger = (Q a).sigma``, ``Q`` from :func:`gamma_axes`."""
    gamma = np.asarray(gamma, dtype=float)
    gmag = np.linalg.norm(gamma)
    if gmag == 0.0:
        return np.eye(2, dtype=complex)
    n, theta = _axis_angle_to(gamma / gmag)
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * np.einsum("i,ijk->jk", n, SIGMA)


def aligned_coordinates(R, gamma):
    """Components ``(X, Y, Z)`` of R in the Gamma-aligned axes, plus |Gamma|."""
    Q, gmag = gamma_axes(gamma)
    XYZ = np.asarray(R, dtype=float) @ Q
    return XYZ[..., 0], XYZ[..., 1], XYZ[..., 2], gmag


def _split_pm(eps, eta, rho2):
    p = eps + eta
    m = eps - eta
    # p * m = rho^2 exactly; recompute the smaller factor to avoid cancellation
    small_p = np.abs(p) < np.abs(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(small_p, rho2 / m, p)
        m = np.where(small_p, m, rho2 / p)
    return p, m


def smooth_gauge_frames(X, Y, Z, gmag, eps, state, phi=None, sqrt_norm=None):
    """Right/left eigenvectors (Gamma-aligned basis) in a fixed smooth gauge.

    With ``rho, phi`` the cylindrical radius and azimuth about Gamma and
    ``eta = Z - i|Gamma|/2``, state 1 uses ``r = (rho, -(eps+eta) e^{i phi}) / sqrt(2 eps (eps+eta))``
    and state 2 ``r = (rho, (eps-eta) e^{i phi}) / sqrt(2 eps (eps-eta))``;
    the left vectors carry ``e^{-i phi}``.  In this gauge the connection
    ``i <l|dr>`` equals ``-(1/2) dphi -+ (1/2)(eta/eps) dphi`` with no exact
    remainder.  The gauge is regular on the half of the Gamma axis where the
    state's own denominator vanishes and singular on the other half.

    Arrays are taken in path order: ``phi`` is unwrapped and the square root
    in the normalisation is branch-continued unless given explicitly.

    Returns
    -------
    r, l : ndarray, shape (n, 2)
    phi, sqrt_norm : ndarray, shape (n,)
        Branch data used, so that neighbouring points can be matched to it.
    """
    X, Y, Z, eps = (np.atleast_1d(np.asarray(a)) for a in (X, Y, Z, eps))
    eta = Z - 0.5j * gmag
    rho2 = X * X + Y * Y
    rho = np.sqrt(rho2)
    if phi is None:
        phi = np.unwrap(np.arctan2(Y, X))
    phi = np.atleast_1d(phi)
    p, m = _split_pm(eps, eta, rho2)
    if state == 1:
        second = -p
        norm = 2.0 * eps * p
    elif state == 2:
        second = m
        norm = 2.0 * eps * m
    else:
        raise InvalidArgumentError(f"state must be 1 or 2, got {state!r}")
    if sqrt_norm is None:
        sqrt_norm, _ = continue_branch(principal_sqrt(norm))
    sqrt_norm = np.atleast_1d(sqrt_norm)
    phase = np.exp(1j * phi)
    # on the Gamma axis both entries can be 0/0; callers mask those rows
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.column_stack([rho / sqrt_norm, second * phase / sqrt_norm])
        l = np.column_stack([rho / sqrt_norm, second / phase / sqrt_norm])
    return r, l, phi, sqrt_norm
