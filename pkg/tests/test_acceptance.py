"""Acceptance criteria, each checked at its stated tolerance.

Every test records a single PASS/FAIL line that is printed in the terminal
summary of the run.
"""
import numpy as np
import pytest
from scipy.integrate import quad

from loops import random_loop
from resonant_phase import (
    Circle3D,
    Defect,
    DriveSchedule,
    ParameterPoint,
    PathLabel,
    SphereMesh,
    berry_phase_discrete,
    berry_phase_line_quadrature,
    berry_phase_spherical,
    build_hamiltonian,
    cap_phase,
    chern_sum_surface,
    chern_trace_plaquette,
    classify_path,
    connection_identity_residual,
    eigendecompose,
    propagate,
    sample_loop,
)
from resonant_phase.holonomy import sum_rule_residual

Z_HAT = np.array([0.0, 0.0, 1.0])


def equatorial(N=4096):
    return sample_loop(Circle3D([0, 0, 0], 2.0, Z_HAT, Z_HAT), N)


def test_1_chern_sum_rule(criterion):
    mesh = SphereMesh(2.0, 32, 64)
    total = chern_sum_surface(mesh, Z_HAT)
    chern = chern_trace_plaquette(mesh, Z_HAT)
    err = abs(total + 2 * np.pi)
    ok = err < 1e-6 and chern.c1 == 1 and chern.residual < 1e-3
    criterion(1, ok, f"surface sum error {err:.2e}, plaquette c1={chern.c1} residual {chern.residual:.2e}")


def test_2_kind_two_null_sum(criterion):
    spec = Circle3D([0.5, 0, 0], 0.2, [0, 1, 0], Z_HAT)
    loop = sample_loop(spec, 4096)
    cls = classify_path(loop)
    discrete = abs(berry_phase_discrete(loop).total)
    line = abs(berry_phase_line_quadrature(loop).total)
    ok = discrete < 1e-8 and line < 1e-8 and cls.winding == 0 and abs(cls.linking) == 1
    criterion(2, ok, f"|sum| discrete {discrete:.2e} line {line:.2e}, W={cls.winding} L={cls.linking}")


def test_3_general_sum_rule(criterion):
    rng = np.random.default_rng(2024)
    worst, labels = 0.0, set()
    expected = {"trivial": PathLabel.TRIVIAL, "kind1": PathLabel.KIND_I, "kind2": PathLabel.KIND_II}
    for kind, label in expected.items():
        for i in range(10):
            turns = 2 if kind == "kind1" and i % 3 == 0 else 1
            spec = random_loop(kind, rng, turns)
            loop = sample_loop(spec, 2048, min_dist=0.05 * np.linalg.norm(spec.gamma))
            cls = classify_path(loop)
            assert cls.label is label
            labels.add(cls.label)
            for res in (berry_phase_discrete(loop), berry_phase_line_quadrature(loop)):
                worst = max(worst, sum_rule_residual(res[1], res[2], cls.winding))
    criterion(3, worst < 1e-7 and len(labels) == 3,
              f"max |g1 + g2 + 2 pi W| = {worst:.2e} over 30 loops, both methods")


def _independent_equatorial_gamma1():
    """``-1/2 \\oint (1 + (Z - i G/2)/eps) dphi`` with eps from numpy eigenvalues."""
    def integrand(phi, part):
        R = np.array([2 * np.cos(phi), 2 * np.sin(phi), 0.0])
        H = build_hamiltonian(ParameterPoint(R, Z_HAT)).entries
        ev = np.linalg.eigvals(H)
        eps = 0.5 * (ev.max() - ev.min()) if ev[0].real != ev[1].real else 0.5 * (ev[1] - ev[0])
        eps = np.sqrt(eps * eps)  # principal root
        value = -0.5 * (1 + (R[2] - 0.5j) / eps)
        return value.real if part == 0 else value.imag
    re = quad(integrand, 0, 2 * np.pi, args=(0,), epsabs=1e-13)[0]
    im = quad(integrand, 0, 2 * np.pi, args=(1,), epsabs=1e-13)[0]
    return complex(re, im)


def test_4_cross_method_consistency(criterion):
    closed = -np.pi + 1j * np.pi * 0.5 / np.sqrt(3.75)
    independent = _independent_equatorial_gamma1()
    loop = equatorial()
    values = {
        "discrete": berry_phase_discrete(loop, 1)[1],
        "line": berry_phase_line_quadrature(loop, 1)[1],
        "spherical": berry_phase_spherical(loop, 1)[1],
    }
    pairwise = max(abs(a - b) for a in values.values() for b in values.values())
    to_closed = max(abs(v - closed) for v in values.values())
    ok = pairwise < 1e-4 and to_closed < 1e-4 and abs(independent - closed) < 1e-10
    criterion(4, ok, f"pairwise {pairwise:.2e}, to closed form {to_closed:.2e}, "
                     f"independent quadrature off by {abs(independent - closed):.1e}")


@pytest.mark.parametrize("theta", [np.pi / 3, np.pi / 2], ids=["pi/3", "pi/2"])
def test_5_hermitian_limit(criterion, theta):
    gamma = np.array([0.0, 0.0, 1e-9])
    loop = sample_loop(Circle3D([0, 0, np.cos(theta)], np.sin(theta), Z_HAT, gamma), 4096)
    expected = -np.pi * (1 - np.cos(theta))
    worst_re, worst_im = 0.0, 0.0
    for res in (berry_phase_discrete(loop, 1), berry_phase_line_quadrature(loop, 1)):
        worst_re = max(worst_re, abs(res[1].real - expected))
        worst_im = max(worst_im, abs(res[1].imag))
    criterion(5, worst_re < 1e-5 and worst_im < 1e-6,
              f"theta={theta:.4f}: Re g1 off by {worst_re:.3e} from {expected:.6f}, |Im g1| {worst_im:.1e}")


def test_6_stokes_upper_cap(criterion):
    line = berry_phase_line_quadrature(equatorial(), 1)[1]
    upper = cap_phase(2.0, Z_HAT, np.pi / 2, 1, "upper")
    err = abs(line - upper)
    criterion(6, err < 1e-6, f"|line - upper cap| = {err:.6e} (line {line:.6f}, cap {upper:.6f})")


def test_7_connection_identity(criterion):
    rng = np.random.default_rng(11)
    worst, min_ratio, count = 0.0, np.inf, 0
    while count < 20:
        point = ParameterPoint(rng.uniform(-1.5, 1.5, 3), rng.uniform(-1, 1, 3))
        if abs(point.epsilon_squared()) < 0.05:
            continue
        count += 1
        for s, m in ((1, 2), (2, 1)):
            coarse = connection_identity_residual(point, s, m, 1e-5)
            fine = connection_identity_residual(point, s, m, 0.5e-5)
            worst = max(worst, coarse)
            min_ratio = min(min_ratio, coarse / fine)
    criterion(7, worst < 1e-5 and min_ratio >= 3,
              f"max residual {worst:.2e} at step 1e-5, min halving ratio {min_ratio:.2f}")


def test_8_jordan_taxonomy(criterion):
    defects = []
    for t in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        point = ParameterPoint([0.5 * np.cos(t), 0.5 * np.sin(t), 0.0], Z_HAT)
        defects.append(eigendecompose(build_hamiltonian(point)).defect)
    origin = eigendecompose(build_hamiltonian(ParameterPoint([0, 0, 0], [0, 0, 0]))).defect
    ok = all(d is Defect.JORDAN_RANK2 for d in defects) and origin is Defect.DIAGONAL_DEGENERATE
    criterion(8, ok, f"circle: {sorted({d.value for d in defects})}, origin: {origin.value}")


def test_9_adiabatic_convergence(criterion):
    gamma = np.array([0.0, 0.0, 0.2])
    spec = Circle3D([0, 0, 0.5], 1.0, Z_HAT, gamma, E_offset=-0.05j)
    reference = berry_phase_line_quadrature(sample_loop(spec, 1024), 1)[1]
    errors, leakage = [], []
    for T in (125, 250, 500, 1000):
        result = propagate(DriveSchedule(spec, T), 1)
        errors.append(abs(result.extracted_gamma - reference))
        leakage.append(result.leakage)
    ratios = [a / b for a, b in zip(leakage[:-1], leakage[1:])]
    ok = (errors[-1] < 1e-2 and all(a > b for a, b in zip(errors[:-1], errors[1:]))
          and all(abs(r / 2 - 1) <= 0.2 for r in ratios))
    criterion(9, ok, "errors " + ", ".join(f"{e:.2e}" for e in errors)
              + "; leakage ratios " + ", ".join(f"{r:.3f}" for r in ratios))


def test_10_gauge_invariance(criterion):
    loop = equatorial(512)
    base = berry_phase_discrete(loop)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        gauge = np.exp(rng.normal(size=loop.N) + 1j * rng.uniform(-np.pi, np.pi, loop.N))
        res = berry_phase_discrete(loop, gauge=gauge)
        for s in (1, 2):
            ref = np.exp(1j * base[s])
            worst = max(worst, abs(np.exp(1j * res[s]) - ref) / abs(ref))
    criterion(10, worst < 1e-12, f"max relative change of exp(i gamma) {worst:.2e}")


def test_11_convergence_order(criterion):
    spec = Circle3D([0, 0, 0], 2.0, Z_HAT, Z_HAT)
    reference = berry_phase_line_quadrature(sample_loop(spec, 64), 1)[1]
    gaps = [abs(berry_phase_discrete(sample_loop(spec, N), 1)[1] - reference)
            for N in (512, 1024, 2048, 4096)]
    ratios = [a / b for a, b in zip(gaps[:-1], gaps[1:])]
    criterion(11, min(ratios) >= 3.5, "reduction per doubling " + ", ".join(f"{r:.3f}" for r in ratios))
