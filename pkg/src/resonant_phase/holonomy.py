"""Complex geometric phase of the two resonant states around closed loops.

Three independent routes are provided: the discrete biorthogonal Wilson loop
over sampled eigenframes, quadrature of the closed-form connection (in
Cartesian and in spherical variables), and surface integrals of the curvature
over spheres and caps together with a plaquette Chern number.

With ``eta = Z - i|Gamma|/2`` (the component of ``R - i Gamma/2`` along
Gamma), ``rho, phi`` the cylindrical radius and azimuth about Gamma, and the
phase defined as ``gamma_s = i \\oint <l_s|d r_s>``, the two states carry::

    gamma_1 = -1/2 \\oint dphi - 1/2 \\oint (eta/eps) dphi
    gamma_2 = -1/2 \\oint dphi + 1/2 \\oint (eta/eps) dphi

so ``gamma_1 + gamma_2 = -2 pi W`` for a loop of winding ``W``.  Real parts
are accumulated along the loop and not reduced modulo 2 pi.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    FormulaSingularError,
    InvalidArgumentError,
    NearDegeneracyError,
    RefineError,
    WindingUndefinedError,
    WrongClassError,
)
from .geometry import PathLabel, SampledLoop, azimuth_increments, classify_path, winding_number
from .quadrature import integrate_adaptive, integrate_contour
from .spectral import (
    _split_pm,
    aligned_coordinates,
    batch_frames,
    continue_branch,
    gamma_axes,
    principal_sqrt,
    smooth_gauge_frames,
    spinor_rotation,
)

NEAR_DEGENERACY_FLOOR = 1e-6
DEFAULT_QUAD_RTOL = 1e-9


class Method(enum.Enum):
    DISCRETE_WILSON = "DiscreteWilson"
    LINE_QUADRATURE = "LineQuadrature"
    SPHERICAL_QUADRATURE = "SphericalQuadrature"
    SURFACE_INTEGRAL = "SurfaceIntegral"
    DELTA_GAMMA_PATH = "DeltaGammaPath"


@dataclass(frozen=True)
class Diagnostics:
    branch_flips: int = 0
    min_eps_abs: float = float("nan")
    closure_defect: float = 0.0
    evaluations: int = 0
    notice: Optional[str] = None


@dataclass(frozen=True)
class PhaseResult:
    """Geometric phase per state, keyed by state index (1 and/or 2)."""

    gamma: dict
    method: Method
    N: int
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __getitem__(self, state: int) -> complex:
        return self.gamma[state]

    @property
    def total(self) -> complex:
        """``gamma_1 + gamma_2``; both states must be present."""
        return self.gamma[1] + self.gamma[2]


def _states(state):
    states = (state,) if isinstance(state, (int, np.integer)) else tuple(state)
    if not states or any(s not in (1, 2) for s in states):
        raise InvalidArgumentError(f"state must be 1, 2 or a sequence of them, got {state!r}")
    return states


def sum_rule_residual(gamma_1: complex, gamma_2: complex, winding: int) -> float:
    """``|gamma_1 + gamma_2 + 2 pi W|``."""
    return abs(gamma_1 + gamma_2 + 2 * np.pi * winding)


def _eps_floor(gamma, R) -> float:
    g = float(np.linalg.norm(gamma))
    if g > 0:
        return NEAR_DEGENERACY_FLOOR * g
    return NEAR_DEGENERACY_FLOOR * float(np.mean(np.linalg.norm(R, axis=-1)))


def _check_floor(eps, gamma, R):
    floor = _eps_floor(gamma, R)
    k = int(np.argmin(np.abs(eps)))
    if abs(eps[k]) < floor:
        raise NearDegeneracyError(
            f"|eps| = {abs(eps[k]):.3g} below the near-degeneracy floor {floor:.3g} "
            f"at R = {np.asarray(R)[k].tolist()}"
        )


def _epsilon_squared(R, gamma):
    v = np.asarray(R, dtype=float) - 0.5j * np.asarray(gamma, dtype=float)
    return np.sum(v * v, axis=-1)


def loop_epsilon(loop: SampledLoop):
    """Branch-continued splitting at samples ``0..N`` (sample ``N`` closes the loop).

    ``eps[N] = -eps[0]`` signals that the loop exchanges the two states.
    """
    roots, flips = continue_branch(principal_sqrt(_epsilon_squared(loop.closed_R, loop.gamma)))
    return roots, flips


def _require_unflipped(flips, what):
    if flips:
        raise RefineError(f"{flips} ambiguous square-root continuation step(s) in {what}; refine N")


# --- discrete Wilson loop ----------------------------------------------------------


def _reference_frames(R, gamma, eps, state):
    X, Y, Z, g = aligned_coordinates(R, gamma)
    r, l, _, _ = smooth_gauge_frames(X, Y, Z, g, eps, state)
    U = spinor_rotation(gamma)
    return r @ U.T, l @ U.conj().T


def discrete_frames(loop: SampledLoop, state: int, gauge=None):
    """Aligned biorthonormal frames of one state at samples ``0..N``.

    Frames are built from the eigen-decomposition at every sample, optionally
    rescaled by ``gauge`` (``N`` complex factors, sample ``N`` reusing the
    factor of sample 0), renormalised to ``<l|r> = 1`` and then aligned:

    * if the loop stays off the Gamma axis, each frame is rescaled onto the
      smooth reference gauge in which the closed-form connection holds;
      this also fixes the closing frame when the loop exchanges the states;
    * otherwise by discrete parallel transport, ``<l_k|r_{k+1}> = 1``.

    Returns
    -------
    r, l : ndarray, shape (N + 1, 2)
    info : dict
        ``eps``, ``branch_flips``, ``aligned`` ("reference" or "transport").
    """
    R = loop.closed_R
    eps, flips = loop_epsilon(loop)
    _check_floor(eps, loop.gamma, R)
    r, l = batch_frames(R, loop.gamma, eps, state)
    if gauge is not None:
        c = np.asarray(gauge, dtype=complex).reshape(-1)
        if c.shape != (loop.N,) or np.any(c == 0):
            raise InvalidArgumentError("gauge must hold N non-zero complex factors")
        c = np.append(c, c[0])
        r = r * c[:, None]
        l = l / c[:, None]
    l = l / np.sum(l * r, axis=1)[:, None]

    try:
        azimuth_increments(loop)
        on_axis = False
    except WindingUndefinedError:
        on_axis = True

    if not on_axis:
        rG, lG = _reference_frames(R, loop.gamma, eps, state)
        alpha = np.sum(lG * r, axis=1)
        r = r / alpha[:, None]
        l = l * alpha[:, None]
        aligned = "reference"
    else:
        if abs(eps[-1] - eps[0]) > abs(eps[-1] + eps[0]):
            raise WindingUndefinedError(
                "loop crosses the Gamma axis and exchanges the two states; "
                "no reference gauge fixes the closing frame"
            )
        r, l = r.copy(), l.copy()
        for k in range(1, loop.N):
            c = np.dot(l[k - 1], r[k])
            r[k] /= c
            l[k] *= c
        aligned = "transport"
    return r, l, {"eps": eps, "branch_flips": flips, "aligned": aligned}


def link_logs(r, l, symmetric: bool = True):
    """Per-step logarithms of the link variables between consecutive frames.

    The plain link is ``a_k = <l_k|r_{k+1}>``.  The symmetric link
    ``a_k / sqrt(a_k b_k)`` with ``b_k = <l_{k+1}|r_k>`` has the same gauge
    covariance (``a_k b_k`` is gauge invariant) but cancels the even-order
    terms in the step, so the discrete sum converges at second order in the
    step instead of first.
    """
    a = np.sum(l[:-1] * r[1:], axis=1)
    if not symmetric:
        return np.log(a)
    b = np.sum(l[1:] * r[:-1], axis=1)
    return np.log(a / np.sqrt(a * b))


def wilson_phase(r, l, symmetric: bool = True) -> complex:
    """``i * sum_k log(link_k)`` over frames ``0..N`` (frame ``N`` closes the loop)."""
    return complex(1j * np.sum(link_logs(r, l, symmetric)))


def berry_phase_discrete(loop: SampledLoop, state=(1, 2), gauge=None,
                         symmetric: bool = True) -> PhaseResult:
    """Discrete biorthogonal Wilson loop over the sampled eigenframes.

    Parameters
    ----------
    loop : SampledLoop
    state : int or sequence of int
    gauge : array_like, optional
        ``N`` complex factors applied to the right eigenvectors before
        alignment (the left ones are divided); the result does not depend
        on them.  A mapping ``state -> factors`` is also accepted.
    symmetric : bool
        Use the symmetric link variables (see :func:`link_logs`).

    Raises
    ------
    RefineError
        If a per-step log leaves ``|log| < pi/2`` or the square-root
        continuation is ambiguous.
    """
    gammas = {}
    flips_total = 0
    min_eps = np.inf
    for s in _states(state):
        g = gauge.get(s) if isinstance(gauge, dict) else gauge
        r, l, info = discrete_frames(loop, s, g)
        steps = link_logs(r, l, symmetric)
        worst = int(np.argmax(np.abs(steps)))
        if abs(steps[worst]) >= np.pi / 2:
            raise RefineError(
                f"overlap between samples {worst} and {worst + 1} leaves the principal "
                f"branch (|log| = {abs(steps[worst]):.3g}); refine N"
            )
        _require_unflipped(info["branch_flips"], "the sampled loop")
        gammas[s] = complex(1j * np.sum(steps))
        flips_total += info["branch_flips"]
        min_eps = min(min_eps, float(np.abs(info["eps"]).min()))
    closure = float(np.linalg.norm(loop.spec.position(np.array([1.0]))[0] - loop.R[0]))
    notice = None if info["aligned"] == "reference" else "frames aligned by parallel transport"
    return PhaseResult(gammas, Method.DISCRETE_WILSON, loop.N,
                       Diagnostics(flips_total, min_eps, closure, loop.N + 1, notice))


# --- quadrature of the closed-form connection --------------------------------------


def _contour_fields(loop: SampledLoop, t):
    """Aligned geometry and branch-continued eps at ordered parameters ``t``."""
    spec = loop.spec
    X, Y, Z, g = aligned_coordinates(spec.position(t), loop.gamma)
    VX, VY, VZ, _ = aligned_coordinates(spec.velocity(t), loop.gamma)
    eta = Z - 0.5j * g
    rho2 = X * X + Y * Y
    eps0 = complex(principal_sqrt(_epsilon_squared(loop.R[0], loop.gamma)))
    eps, flips = continue_branch(principal_sqrt(eta * eta + rho2), start=eps0)
    return {
        "X": X, "Y": Y, "Z": Z, "VX": VX, "VY": VY, "VZ": VZ, "g": g,
        "eta": eta, "rho2": rho2, "eps": eps, "flips": flips,
        "num": X * VY - Y * VX,
    }


def axis_singular_states(loop: SampledLoop) -> set:
    """States whose line connection has a delta-like azimuth jump on the loop.

    Where the loop meets the Gamma axis the azimuth jumps by pi.  The jump
    is harmless for the state whose denominator ``eps -+ eta`` stays finite
    there and carries a finite weight for the other one.
    """
    try:
        azimuth_increments(loop)
        return set()
    except WindingUndefinedError:
        pass
    dense = np.linspace(0.0, 1.0, 16 * loop.N + 1)
    d = _contour_fields(loop, dense)
    k = int(np.argmin(d["rho2"]))
    eps, eta = d["eps"][k], d["eta"][k]
    return {1} if abs(eps - eta) < abs(eps + eta) else {2}


def _line_integrand(loop, state, tracker):
    def f(t):
        d = _contour_fields(loop, t)
        eps = d["eps"]
        R = loop.spec.position(t)
        _check_floor(eps, loop.gamma, R)
        p, m = _split_pm(eps, d["eta"], d["rho2"])
        den = eps * (m if state == 1 else p)
        num = d["num"]
        bad = (num != 0) & (np.abs(den) < 1e-12 * max(d["g"], 1e-300) ** 2)
        if np.any(bad):
            raise FormulaSingularError(
                f"state {state} connection is singular where the loop meets the Gamma axis; "
                "use the discrete method"
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(num == 0, 0.0, -0.5 * num / den)
        tracker["flips"] = d["flips"]
        tracker["min_eps"] = float(np.abs(eps).min())
        return val
    return f


def berry_phase_line_quadrature(loop: SampledLoop, state=(1, 2),
                                rtol: float = DEFAULT_QUAD_RTOL) -> PhaseResult:
    """Composite Gauss-Legendre quadrature of the Cartesian line form::

        gamma_1 = -1/2 \\oint (g x R).dR / (eps (eps - eta))
        gamma_2 = -1/2 \\oint (g x R).dR / (eps (eps + eta))

    with ``g`` the unit vector along Gamma.  Panels respect the loop's
    breakpoints and are halved globally until two levels agree to ``rtol``.
    """
    if np.linalg.norm(loop.gamma) == 0:
        raise FormulaSingularError("line formula needs |Gamma| > 0; use the discrete method")
    singular = axis_singular_states(loop) & set(_states(state))
    if singular:
        raise FormulaSingularError(
            f"state {min(singular)} connection is singular where the loop meets the Gamma axis; "
            "use the discrete method"
        )
    gammas, evals, flips, min_eps = {}, 0, 0, np.inf
    for s in _states(state):
        tracker = {}
        q = integrate_contour(_line_integrand(loop, s, tracker), loop.spec.breakpoints, rtol)
        _require_unflipped(tracker["flips"], "the quadrature nodes")
        gammas[s] = q.value
        evals += q.evaluations
        min_eps = min(min_eps, tracker["min_eps"])
    return PhaseResult(gammas, Method.LINE_QUADRATURE, loop.N,
                       Diagnostics(flips, min_eps, 0.0, evals))


class NotGraphLikeError(WindingUndefinedError):
    """The loop is not single valued over the azimuth about Gamma."""


def _azimuth_parametrisation(loop: SampledLoop):
    """Unwrapped azimuth on a dense parameter table; checks monotonicity."""
    dense = np.linspace(0.0, 1.0, 16 * loop.N + 1)
    X, Y, _, _ = aligned_coordinates(loop.spec.position(dense), loop.gamma)
    VX, VY, _, _ = aligned_coordinates(loop.spec.velocity(dense), loop.gamma)
    rho2 = X * X + Y * Y
    if rho2.min() <= (1e-12 * max(1.0, float(np.sqrt(rho2.max())))) ** 2:
        raise WindingUndefinedError("loop meets the Gamma axis; azimuth undefined")
    rate = (X * VY - Y * VX) / rho2
    phi = np.unwrap(np.arctan2(Y, X))
    if not (np.all(rate > 0) or np.all(rate < 0)):
        raise NotGraphLikeError("azimuth about Gamma is not monotonic along the loop")
    return dense, phi


def _invert_azimuth(loop, dense, phi_table, targets):
    """Parameters ``t`` with unwrapped azimuth equal to ``targets`` (Newton polish)."""
    order = np.argsort(phi_table)
    t = np.interp(targets, phi_table[order], dense[order])
    for _ in range(8):
        X, Y, _, _ = aligned_coordinates(loop.spec.position(t), loop.gamma)
        VX, VY, _, _ = aligned_coordinates(loop.spec.velocity(t), loop.gamma)
        raw = np.arctan2(Y, X)
        guess = np.interp(t, dense, phi_table)
        phi = raw + 2 * np.pi * np.round((guess - raw) / (2 * np.pi))
        rate = (X * VY - Y * VX) / (X * X + Y * Y)
        dt = (phi - targets) / rate
        t = np.clip(t - dt, 0.0, 1.0)
        if np.max(np.abs(dt)) < 1e-15:
            break
    return t


def berry_phase_spherical(loop: SampledLoop, state=(1, 2),
                          rtol: float = DEFAULT_QUAD_RTOL) -> PhaseResult:
    """Quadrature over the azimuth ``phi`` about Gamma in spherical variables::

        gamma_{1,2} = -1/2 \\oint dphi -+ 1/2 \\oint (r cos(th) - i G/2) dphi
                                            / sqrt(r^2 - G^2/4 - i G r cos(th))

    The loop must be a graph over ``phi`` (monotonic azimuth).  Loops that
    are not fall back to :func:`berry_phase_line_quadrature`, with a notice
    in the diagnostics; loops meeting the Gamma axis raise.
    """
    gmag = float(np.linalg.norm(loop.gamma))
    if gmag == 0:
        raise FormulaSingularError("spherical formula needs |Gamma| > 0; use the discrete method")
    try:
        dense, phi_table = _azimuth_parametrisation(loop)
    except NotGraphLikeError as exc:
        res = berry_phase_line_quadrature(loop, state, rtol)
        return PhaseResult(res.gamma, Method.LINE_QUADRATURE, res.N,
                           Diagnostics(res.diagnostics.branch_flips, res.diagnostics.min_eps_abs,
                                       0.0, res.diagnostics.evaluations,
                                       f"spherical form not applicable ({exc}); used line quadrature"))
    W = winding_number(loop)
    # breakpoints of the loop map to kinks in phi
    kinks = np.interp(loop.spec.breakpoints, dense, phi_table)
    eps0 = complex(principal_sqrt(_epsilon_squared(loop.R[0], loop.gamma)))

    def ratio(phi_nodes, tracker):
        t = _invert_azimuth(loop, dense, phi_table, phi_nodes)
        R = loop.spec.position(t)
        X, Y, Z, _ = aligned_coordinates(R, loop.gamma)
        r = np.sqrt(X * X + Y * Y + Z * Z)
        cos_th = np.divide(Z, r, out=np.zeros_like(r), where=r > 0)
        eps, flips = continue_branch(
            principal_sqrt(r * r - 0.25 * gmag ** 2 - 1j * gmag * r * cos_th), start=eps0
        )
        _check_floor(eps, loop.gamma, R)
        tracker["flips"] = flips
        tracker["min_eps"] = float(np.abs(eps).min())
        return (r * cos_th - 0.5j * gmag) / eps

    gammas, evals, min_eps = {}, 0, np.inf
    for s in _states(state):
        sign = -1.0 if s == 1 else 1.0
        tracker = {}
        q = integrate_contour(lambda ph: -0.5 + sign * 0.5 * ratio(ph, tracker), kinks, rtol)
        _require_unflipped(tracker["flips"], "the quadrature nodes")
        gammas[s] = q.value
        evals += q.evaluations
        min_eps = min(min_eps, tracker["min_eps"])
    return PhaseResult(gammas, Method.SPHERICAL_QUADRATURE, loop.N,
                       Diagnostics(0, min_eps, 0.0, evals,
                                   None if W else "loop has zero winding"))


def delta_gamma_path(loop: SampledLoop, rtol: float = DEFAULT_QUAD_RTOL) -> complex:
    """Winding-free part of the phase, ``-1/2 \\oint (eta/eps) dphi``.

    Written as a path integral,
    ``-1/2 \\oint (Z - i G/2) (g x R).dR / (eps (X^2 + Y^2))``.
    For a loop linked with the degeneracy circle (zero winding)
    ``gamma_1 = +delta`` and ``gamma_2 = -delta``; for a mixed loop
    ``gamma_{1,2} = -pi W +- delta``.

    Raises
    ------
    WrongClassError
        For winding, unlinked loops, whose phases are not described by the
        path integral alone.
    NearDegeneracyError
        If the loop comes too close to the Gamma axis.
    """
    gmag = float(np.linalg.norm(loop.gamma))
    if gmag == 0:
        raise FormulaSingularError("delta-gamma integral needs |Gamma| > 0")
    cls = classify_path(loop)
    if cls.label is PathLabel.KIND_I:
        raise WrongClassError(
            f"loop winds (W={cls.winding}) without linking; its phases carry the winding term"
        )
    floor = (NEAR_DEGENERACY_FLOOR * gmag) ** 2
    tracker = {}

    def f(t):
        d = _contour_fields(loop, t)
        if d["rho2"].min() < floor:
            raise NearDegeneracyError("loop comes too close to the Gamma axis")
        _check_floor(d["eps"], loop.gamma, loop.spec.position(t))
        tracker["flips"] = d["flips"]
        return -0.5 * d["eta"] * d["num"] / (d["eps"] * d["rho2"])

    q = integrate_contour(f, loop.spec.breakpoints, rtol)
    _require_unflipped(tracker["flips"], "the quadrature nodes")
    return q.value


# --- spheres, caps and Chern numbers -----------------------------------------------


@dataclass(frozen=True)
class SphereMesh:
    """Origin-centred sphere with an ``n_theta x n_phi`` grid in angles about Gamma."""

    radius: float
    n_theta: int
    n_phi: int

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidArgumentError(f"radius must be positive, got {self.radius}")
        if self.n_theta < 2 or self.n_phi < 3:
            raise InvalidArgumentError("mesh needs n_theta >= 2 and n_phi >= 3")


def _check_sphere(radius, gamma):
    g = float(np.linalg.norm(gamma))
    if abs(radius - 0.5 * g) < NEAR_DEGENERACY_FLOOR * max(g, radius):
        raise NearDegeneracyError(
            f"sphere of radius {radius} meets the degeneracy circle "
            f"(|R| = |Gamma|/2 = {0.5 * g}, R.Gamma = 0)"
        )
    return g


def sphere_epsilon(u, radius, gmag):
    """Splitting on a sphere at ``cos(theta) = u``, continuous over the whole sphere.

    The branch is the principal root at the pole along Gamma.  Inside the
    circle radius the square crosses the negative axis at the equator, so
    the root is written as ``-i sqrt(-eps^2)`` there.
    """
    u = np.asarray(u, dtype=float)
    a2 = 0.25 * gmag ** 2
    if radius ** 2 > a2:
        return principal_sqrt(radius ** 2 - a2 - 1j * gmag * radius * u)
    return -1j * principal_sqrt(a2 - radius ** 2 + 1j * gmag * radius * u)


def _flux_density(radius, gmag, sign=1.0):
    """``(R - iG/2).n r^2 / eps^3`` on the sphere as a function of ``u``."""
    def f(u):
        eps = sign * sphere_epsilon(u, radius, gmag)
        return (radius - 0.5j * gmag * u) * radius ** 2 / eps ** 3
    return f


def chern_sum_surface(mesh: SphereMesh, gamma, rtol: float = 1e-12) -> complex:
    """``gamma_1 + gamma_2 = -1/2 \\oint (R - iG/2).dS / eps^3`` over the sphere.

    The integrand does not depend on the azimuth about Gamma, so each of the
    ``n_theta`` bands is integrated in ``u = cos(theta)`` by adaptive
    Gauss-Legendre and the azimuthal integral is exact.  A band that cannot
    be resolved raises :class:`RefineError`.
    """
    gamma = np.asarray(gamma, dtype=float)
    gmag = _check_sphere(mesh.radius, gamma)
    f = _flux_density(mesh.radius, gmag)
    edges = np.cos(np.linspace(0.0, np.pi, mesh.n_theta + 1))
    total = 0.0 + 0.0j
    for hi, lo in zip(edges[:-1], edges[1:]):
        total += integrate_adaptive(f, lo, hi, rtol=rtol, atol=1e-15, max_depth=30).value
    return complex(-0.5 * 2 * np.pi * total)


def cap_phase(radius: float, gamma, theta0: float, state: int, cap: str = "upper",
              rtol: float = 1e-12) -> complex:
    """Curvature flux of one state through a spherical cap bounded by a latitude loop.

    The loop runs counter-clockwise about Gamma at polar angle ``theta0`` on
    the sphere of the given radius, and the cap normal follows the right-hand
    rule: outward for the upper cap (towards +Gamma), inward for the lower
    one.  The state's curvature is ``+1/2 (R - iG/2).dS / eps^3`` for state
    1 and the negative for state 2, with the branch of ``eps`` continued from
    the principal value at the loop.  The result equals the line phase of the
    state up to an integer multiple of 2 pi.
    """
    if cap not in ("upper", "lower"):
        raise InvalidArgumentError(f"cap must be 'upper' or 'lower', got {cap!r}")
    _states(state)
    gamma = np.asarray(gamma, dtype=float)
    gmag = _check_sphere(radius, gamma)
    u0 = float(np.cos(theta0))
    on_loop = sphere_epsilon(u0, radius, gmag)
    eps2 = radius ** 2 - 0.25 * gmag ** 2 - 1j * gmag * radius * u0
    branch = 1.0 if abs(principal_sqrt(eps2) - on_loop) <= abs(principal_sqrt(eps2) + on_loop) else -1.0
    f = _flux_density(radius, gmag, branch)
    if cap == "upper":
        flux = integrate_adaptive(f, u0, 1.0, rtol=rtol, atol=1e-15).value
    else:
        flux = -integrate_adaptive(f, -1.0, u0, rtol=rtol, atol=1e-15).value
    weight = 0.5 if state == 1 else -0.5
    return complex(weight * 2 * np.pi * flux)


@dataclass(frozen=True)
class ChernResult:
    """Plaquette Chern number with per-state curvature totals.

    ``per_state[s]`` is the sum of the state's plaquette phases over the
    outward-oriented sphere divided by 2 pi; ``c1 = (n_1 - n_2) / 2``.
    """

    c1: int
    raw: float
    per_state: dict
    residual: float


def _sphere_nodes(mesh: SphereMesh, gamma):
    Q, _ = gamma_axes(gamma)
    theta = np.linspace(0.0, np.pi, mesh.n_theta + 1)[1:-1]
    phi = 2 * np.pi * np.arange(mesh.n_phi) / mesh.n_phi
    st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
    local = np.stack(
        [st * np.cos(phi), st * np.sin(phi), np.broadcast_to(ct, (theta.size, phi.size))], axis=-1
    ).reshape(-1, 3)
    local = np.vstack([[0.0, 0.0, 1.0], local, [0.0, 0.0, -1.0]])
    return mesh.radius * local @ Q.T, local[:, 2]


def _plaquette_corners(mesh: SphereMesh):
    nt, nph = mesh.n_theta, mesh.n_phi
    last = 1 + (nt - 1) * nph

    def node(i, j):
        j = j % nph
        if i == 0:
            return np.zeros_like(j)
        if i == nt:
            return np.full_like(j, last)
        return 1 + (i - 1) * nph + j

    j = np.arange(nph)
    corners = [
        np.stack([node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)], axis=1)
        for i in range(nt)
    ]
    return np.vstack(corners)


def chern_trace_plaquette(mesh: SphereMesh, gamma) -> ChernResult:
    """First Chern number from per-state plaquette Wilson loops.

    Each plaquette is traversed counter-clockwise seen from outside (pole
    plaquettes are triangles).  Links are the symmetric link variables of
    :func:`link_logs`; since every link appears once in each direction, the
    per-state total is an exact multiple of 2 pi for any gauge.

    Raises
    ------
    RefineError
        If ``(n_1 - n_2)/2`` is further than 1e-3 from an integer.
    """
    gamma = np.asarray(gamma, dtype=float)
    gmag = _check_sphere(mesh.radius, gamma)
    R, u = _sphere_nodes(mesh, gamma)
    eps = sphere_epsilon(u, mesh.radius, gmag)
    _check_floor(eps, gamma, R)
    quads = _plaquette_corners(mesh)
    per_state = {}
    for s in (1, 2):
        r, l = batch_frames(R, gamma, eps, s)
        logs = np.zeros(len(quads), dtype=complex)
        for k in range(4):
            p, q = quads[:, k], quads[:, (k + 1) % 4]
            a = np.sum(l[p] * r[q], axis=1)
            b = np.sum(l[q] * r[p], axis=1)
            logs += np.log(a / np.sqrt(a * b))
        # i * log W per plaquette, wrapped to the principal branch
        plaquette = 1j * np.log(np.exp(logs))
        per_state[s] = complex(np.sum(plaquette)) / (2 * np.pi)
    raw_c = (per_state[1] - per_state[2]) / 2
    raw = float(raw_c.real)
    c1 = int(round(raw))
    residual = abs(raw_c - c1)
    if residual >= 1e-3:
        raise RefineError(f"plaquette Chern sum {raw:.6g} is not near an integer; double the mesh")
    return ChernResult(c1, raw, per_state, residual)
