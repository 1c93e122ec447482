"""Time evolution of the driven two-level system and adiabatic phase extraction.

The state is expanded in the instantaneous biorthogonal frame,
``psi = sum_m a_m r_m``, with frames taken in the smooth reference gauge of
:func:`resonant_phase.spectral.smooth_gauge_frames`.  The amplitudes obey::

    da_s/dt = -(i/hbar) E_s a_s - sum_m <l_s|dr_m/dt> a_m

Only the dynamical phase of the followed state ``s`` is factored out,
``b_m = exp((i/hbar) \\int E_s dt) a_m``.  Then ``b_s`` is the co-moving
amplitude ``C_s`` and ``|b_m / b_s|`` is the physical admixture of the other
level, so neither the resonant decay nor the growth of a slower-decaying
partner ever reaches the stored numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import (
    AdiabaticityViolationError,
    InvalidArgumentError,
    RefineError,
    WindingUndefinedError,
)
from .geometry import LoopSpec, sample_loop
from .holonomy import _check_floor
from .spectral import (
    SIGMA,
    aligned_coordinates,
    continue_branch,
    principal_sqrt,
    smooth_gauge_frames,
)

LEAKAGE_THRESHOLD = 0.05
MAX_STEP_ROTATION = 0.1
MIN_STEPS = 1000
FIXED_FRAME_MAX_T = 50.0


@dataclass(frozen=True)
class DriveSchedule:
    """One traversal of ``loop`` over ``[0, T]``.

    ``steps`` defaults to enough RK4 steps that the relative phase of the two
    levels turns by at most 0.05 rad per step (and never fewer than 1000).
    """

    loop: LoopSpec
    T: float
    hbar: float = 1.0
    steps: Optional[int] = None

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidArgumentError(f"T must be positive, got {self.T}")
        if not (np.isfinite(self.hbar) and self.hbar > 0):
            raise InvalidArgumentError(f"hbar must be positive, got {self.hbar}")
        if self.steps is None:
            dense = np.linspace(0.0, 1.0, 257)
            v = self.loop.position(dense) - 0.5j * self.loop.gamma
            gap = 2.0 * float(np.abs(np.sqrt(np.sum(v * v, axis=1))).max())
            object.__setattr__(self, "steps", max(MIN_STEPS, math.ceil(self.T * gap / (0.05 * self.hbar))))
        if int(self.steps) != self.steps or self.steps < MIN_STEPS:
            raise InvalidArgumentError(f"steps must be an integer >= {MIN_STEPS}, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.T / self.steps


@dataclass(frozen=True)
class EvolutionResult:
    """Trajectory of ``b_1, b_2`` (columns) at the step times ``t_0..t_steps``.

    ``amplitude_trajectory[:, s-1]`` is the co-moving amplitude ``C_s`` of the
    followed state; the other column is the admixed level with the same
    dynamical factor removed.
    """

    schedule: DriveSchedule
    state: int
    times: np.ndarray = field(repr=False)
    amplitude_trajectory: np.ndarray = field(repr=False)
    extracted_gamma: complex
    adiabaticity_max: float
    leakage: float
    mode: str = "comoving"

    @property
    def adiabatic(self) -> bool:
        return self.leakage < LEAKAGE_THRESHOLD


@dataclass(frozen=True)
class _DriveFields:
    times: np.ndarray
    energies: np.ndarray     # (n, 2) E_1, E_2 relative to E_offset
    connection: np.ndarray   # (n, 2, 2) A[s, m] = <l_s|dr_m/dt>
    hamiltonian: np.ndarray  # (n, 2, 2) aligned basis, E_offset included
    left: np.ndarray         # (n, 2, 2) rows l_1, l_2
    right: np.ndarray        # (n, 2, 2) columns r_1, r_2


def _drive_fields(schedule: DriveSchedule, n_sub: int) -> _DriveFields:
    """Frames, energies and connection on ``n_sub + 1`` equally spaced times."""
    loop = schedule.loop
    tau = np.linspace(0.0, 1.0, n_sub + 1)
    X, Y, Z, g = aligned_coordinates(loop.position(tau), loop.gamma)
    VX, VY, VZ, _ = aligned_coordinates(loop.velocity(tau) / schedule.T, loop.gamma)
    eta = Z - 0.5j * g
    rho2 = X * X + Y * Y
    eps, _ = continue_branch(principal_sqrt(eta * eta + rho2))
    _check_floor(eps, loop.gamma, np.column_stack([X, Y, Z]))

    moving = (VX != 0) | (VY != 0) | (VZ != 0)
    num = X * VY - Y * VX
    scale = max(1.0, float(np.sqrt((X * X + Y * Y + Z * Z).max())))
    if np.any((num != 0) & (rho2 <= (1e-9 * scale) ** 2)):
        raise WindingUndefinedError("the drive crosses the Gamma axis; the reference gauge is singular there")
    with np.errstate(divide="ignore", invalid="ignore"):
        phidot = np.where(num == 0, 0.0, num / rho2)

    frames = [smooth_gauge_frames(X, Y, Z, g, eps, s) for s in (1, 2)]
    right = np.stack([frames[0][0], frames[1][0]], axis=2)  # (n, comp, state)
    left = np.stack([frames[0][1], frames[1][1]], axis=1)   # (n, state, comp)

    hdot = VX[:, None, None] * SIGMA[0] + VY[:, None, None] * SIGMA[1] + VZ[:, None, None] * SIGMA[2]
    energies = np.column_stack([-eps, eps])
    A = np.zeros((tau.size, 2, 2), dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = eta / eps
        A[:, 0, 0] = np.where(phidot == 0, 0.0, 0.5j * (1.0 + ratio) * phidot)
        A[:, 1, 1] = np.where(phidot == 0, 0.0, 0.5j * (1.0 - ratio) * phidot)
        coupling = np.einsum("nsi,nij,njm->nsm", left, hdot, right)
        A[:, 0, 1] = np.where(moving, coupling[:, 0, 1] / (2 * eps), 0.0)
        A[:, 1, 0] = np.where(moving, coupling[:, 1, 0] / (-2 * eps), 0.0)
    if not np.all(np.isfinite(A[moving])):
        raise WindingUndefinedError("the reference gauge is singular on the drive")

    v = np.stack([X, Y, Z], axis=1) - np.array([0.0, 0.0, 0.5j * g])
    H = loop.E_offset * np.eye(2) + np.einsum("ni,ijk->njk", v, SIGMA)
    return _DriveFields(tau * schedule.T, energies, A, H, left, right)


def _rk4(rhs, y0, n_steps, h):
    """Classical RK4 where ``rhs(j, y)`` evaluates at the half-step index ``j``."""
    y = np.empty((n_steps + 1, y0.size), dtype=complex)
    y[0] = y0
    cur = y0.copy()
    for k in range(n_steps):
        j = 2 * k
        k1 = rhs(j, cur)
        k2 = rhs(j + 1, cur + 0.5 * h * k1)
        k3 = rhs(j + 1, cur + 0.5 * h * k2)
        k4 = rhs(j + 2, cur + h * k3)
        cur = cur + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        y[k + 1] = cur
    return y


def _unwrapped_phase(traj):
    """``-i log(b(t)/b(0))`` accumulated along the trajectory."""
    ratio = traj / traj[0]
    return float(np.unwrap(np.angle(ratio))[-1]) - 1j * float(np.log(np.abs(ratio[-1])))


def _metric_from_fields(f: _DriveFields, hbar: float) -> float:
    gap = np.abs(f.energies[:, 1] - f.energies[:, 0])
    mixed = np.sqrt(np.abs(f.connection[:, 0, 1] * f.connection[:, 1, 0]))
    return float(np.max(mixed * hbar / gap))


def adiabaticity_metric(schedule: DriveSchedule) -> float:
    """Largest ``hbar |<l_s|dr_m/dt>| / |E_s - E_m|`` over the drive.

    The two off-diagonal elements are combined as a geometric mean, which is
    independent of the relative scale of the two frames.
    """
    return _metric_from_fields(_drive_fields(schedule, 2 * schedule.steps), schedule.hbar)


def propagate(schedule: DriveSchedule, initial_state: int, mode: str = "comoving") -> EvolutionResult:
    """Integrate the drive with fixed-step RK4, starting in ``initial_state``.

    Parameters
    ----------
    schedule : DriveSchedule
    initial_state : {1, 2}
    mode : {"comoving", "fixed"}
        ``"comoving"`` integrates the frame amplitudes directly.  ``"fixed"``
        integrates ``i hbar da/dt = H a`` in a fixed basis and projects onto
        the frames afterwards; it is a cross-check limited to
        ``T <= 50`` because the absolute decay factors are carried along.

    Raises
    ------
    RefineError
        If a single step turns the frame (or the relative phase of the
        levels) by more than 0.1 rad.
    """
    if initial_state not in (1, 2):
        raise InvalidArgumentError(f"initial_state must be 1 or 2, got {initial_state!r}")
    if mode not in ("comoving", "fixed"):
        raise InvalidArgumentError(f"mode must be 'comoving' or 'fixed', got {mode!r}")
    if mode == "fixed" and schedule.T > FIXED_FRAME_MAX_T:
        raise InvalidArgumentError(f"fixed-frame mode is limited to T <= {FIXED_FRAME_MAX_T}")
    sample_loop(schedule.loop, 64)

    h, n = schedule.dt, schedule.steps
    f = _drive_fields(schedule, 2 * n)
    hbar = schedule.hbar
    rot = h * max(float(np.abs(f.connection).max()),
                  float(np.abs(f.energies[:, 1] - f.energies[:, 0]).max()) / hbar)
    if rot > MAX_STEP_ROTATION:
        raise RefineError(f"per-step frame rotation {rot:.3g} rad exceeds {MAX_STEP_ROTATION}; increase steps")

    s = initial_state - 1
    m = 1 - s
    if mode == "comoving":
        M = -f.connection.copy()
        M[:, m, m] += (1j / hbar) * (f.energies[:, s] - f.energies[:, m])
        y0 = np.zeros(2, dtype=complex)
        y0[s] = 1.0
        traj = _rk4(lambda j, y: M[j] @ y, y0, n, h)
    else:
        Hs = f.hamiltonian * (-1j / hbar)
        psi = _rk4(lambda j, y: Hs[j] @ y, f.right[0][:, s].copy(), n, h)
        idx = slice(0, 2 * n + 1, 2)
        a = np.einsum("nsi,ni->ns", f.left[idx], psi)
        E_s = schedule.loop.E_offset + f.energies[:, s]
        phase = (cumulative_simpson(E_s.real, x=f.times, initial=0.0)
                 + 1j * cumulative_simpson(E_s.imag, x=f.times, initial=0.0))[idx]
        traj = a * np.exp((1j / hbar) * phase)[:, None]

    gamma = _unwrapped_phase(traj[:, s])
    leakage = float(abs(traj[-1, m]) / abs(traj[-1, s]))
    return EvolutionResult(schedule, initial_state, f.times[::2], traj, gamma,
                           _metric_from_fields(f, hbar), leakage, mode)


def extract_geometric_phase(result: EvolutionResult) -> complex:
    """``-i log(C_s(T) / C_s(0))`` with the phase unwrapped step by step.

    Raises
    ------
    AdiabaticityViolationError
        If the final admixture of the other level is 0.05 or more.
    """
    if result.leakage >= LEAKAGE_THRESHOLD:
        raise AdiabaticityViolationError(
            f"leakage {result.leakage:.3g} >= {LEAKAGE_THRESHOLD}: the drive is not adiabatic; increase T"
        )
    return _unwrapped_phase(result.amplitude_trajectory[:, result.state - 1])
