"""Shared fixtures: the reaction-diffusion case study and its closed-loop runs.

The heavy simulations are session-scoped so the module tests and the
acceptance gate share a single run of each variant.
"""

import numpy as np
import pytest

import sdcontrol as sd
from sdcontrol.buffers import DelayBuffer

CASE = dict(a=5.0, c=2.5, L=2 * np.pi, n_max=10)
COUPLINGS = dict(a1=1.5, b1=0.5, c1=0.2, a2=0.7, b2=0.55, c2=10.0, d2=0.45)


def synthetic_system(eigs, b=None, m_r=1.0, M_r=1.0):
    """Hand-built diagonal plant with unit lifting data, for unit tests."""
    eigs = np.asarray(eigs, dtype=complex)
    n = eigs.size
    if b is None:
        b = np.ones((n, 1), dtype=complex)
    b = np.asarray(b, dtype=complex)
    lift = np.ones_like(b)
    return sd.SpectralSystem(
        eigenvalues=eigs, input_coeffs=b, lifting_coeffs=lift,
        riesz_lower=m_r, riesz_upper=M_r, domain_length=1.0,
        lifting_norm_B=np.ones(b.shape[1]), lifting_norm_AB=np.ones(b.shape[1]),
        lifting_gram=np.eye(b.shape[1]), basis=None)


@pytest.fixture(scope="session")
def heat_sys():
    return sd.build_heat_system(**CASE)


@pytest.fixture(scope="session")
def design(heat_sys):
    return sd.design_predictor(heat_sys, n0=2, delay=0.1,
                               poles=[-3.0, -3.0], t0=0.2)


@pytest.fixture(scope="session")
def bundle(heat_sys, design):
    return sd.optimize_parameters(heat_sys, design)


@pytest.fixture(scope="session")
def fields(heat_sys):
    return sd.case_study_fields(heat_sys, n_modes=10, **COUPLINGS)


@pytest.fixture(scope="session")
def x0_coeffs(heat_sys):
    L = heat_sys.domain_length
    return sd.project_profile(
        heat_sys, lambda xi: -5.0 * xi * (L / 2 - xi) * (L - xi), 10)


@pytest.fixture(scope="session")
def disturbed_traj(heat_sys, design, fields, x0_coeffs, bundle):
    cfg = sd.SimConfig(dt=1e-3, t_end=10.0, n_modes=10,
                       disturbance="case-study")
    return sd.simulate(cfg, heat_sys, design, fields, x0=-2.0,
                       x0_coeffs=x0_coeffs, bundle=bundle)


@pytest.fixture(scope="session")
def quiet_traj(heat_sys, design, fields, x0_coeffs, bundle):
    """v == 0 but the interconnection feedback still active."""
    cfg = sd.SimConfig(dt=1e-3, t_end=10.0, n_modes=10, disturbance="none")
    return sd.simulate(cfg, heat_sys, design, fields, x0=-2.0,
                       x0_coeffs=x0_coeffs, bundle=bundle)


@pytest.fixture(scope="session")
def dzero_traj(heat_sys, design, x0_coeffs, bundle):
    """d == 0: exogenous input off and the feedback coupling gains zeroed."""
    f0 = sd.case_study_fields(heat_sys, n_modes=10,
                              **{**COUPLINGS, "a2": 0.0, "b2": 0.0})
    cfg = sd.SimConfig(dt=1e-3, t_end=10.0, n_modes=10, disturbance="none")
    return sd.simulate(cfg, heat_sys, design, f0, x0=-2.0,
                       x0_coeffs=x0_coeffs, bundle=bundle)


@pytest.fixture(scope="session")
def open_loop_traj(heat_sys, x0_coeffs):
    des0 = sd.zero_gain_design(heat_sys, n0=2, delay=0.1, t0=0.2)
    fz = sd.decoupled_fields(10, a1=1.5,
                             domain_length=heat_sys.domain_length)
    cfg = sd.SimConfig(dt=1e-3, t_end=4.0, n_modes=10, disturbance="none")
    return sd.simulate(cfg, heat_sys, des0, fz, x0=-2.0,
                       x0_coeffs=x0_coeffs)


def closed_loop_ode(design, y0, t_end, dt):
    """Integrate the delayed finite-dimensional loop dY = A Y + B u(t-D).

    The input is the ramped predictor feedback u = phi K Z computed with the
    same trapezoid-endpoint implicit update the simulator uses, so the
    recorded (Y, u) pair is consistent with the inversion operator's
    quadrature. Returns (times, Y samples, u samples).
    """
    lam = np.diag(design.a_n0)
    b = design.b_n0
    gain = design.gain
    edab = design.exp_da @ b
    delay = design.delay
    n0 = design.n0
    m = b.shape[1]
    phi = design.transition.phi

    nsteps = int(round(t_end / dt))
    buf = DelayBuffer(dt, delay, m)
    y = np.asarray(y0, dtype=complex).copy()
    times = np.zeros(nsteps + 1)
    ys = np.zeros((nsteps + 1, n0), dtype=complex)
    us = np.zeros((nsteps + 1, m), dtype=complex)
    ys[0] = y
    u0 = float(phi(0.0)) * (gain @ y)
    buf.append(0.0, u0)
    us[0] = u0

    def rhs(t, yv):
        return lam * yv + b @ buf.lookup(t - delay)

    for i in range(nsteps):
        t = i * dt
        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t1 = t + dt

        s, uw = buf.window(t1 - delay, t1 - dt)
        kern = np.exp(np.outer(t1 - delay - s, lam))
        known = np.trapezoid(kern * (uw @ b.T), s, axis=0)
        known = known + (dt / 2.0) * np.exp((dt - delay) * lam) * (b @ uw[-1])
        phi1 = float(phi(t1))
        mat = np.eye(n0, dtype=complex) - (dt / 2.0) * phi1 * (edab @ gain)
        z = np.linalg.solve(mat, y + known)
        u1 = phi1 * (gain @ z)
        buf.append(t1, u1)
        times[i + 1] = t1
        ys[i + 1] = y
        us[i + 1] = u1
    return times, ys, us


def random_design(rng, n0=None, m=None, delay=None):
    """A random controllable diagonal plant wrapped in a predictor design."""
    n0 = n0 or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 3))
    delay = delay or float(rng.uniform(0.05, 0.5))
    while True:
        lam = rng.uniform(-3.0, 1.0, n0)
        if n0 == 1 or np.abs(np.subtract.outer(lam, lam))[
                np.triu_indices(n0, 1)].min() > 0.1:
            break
    b = rng.uniform(0.5, 2.0, (n0, m)) * rng.choice([-1.0, 1.0], (n0, m))
    a = np.diag(lam.astype(complex))
    exp_da = sd.diagonal_exponential(a, -delay)
    poles = np.sort(rng.uniform(-4.0, -0.5, n0)).astype(complex)
    gain = sd.place_poles(a, exp_da @ b, poles)
    a_cl = a + exp_da @ b @ gain
    return sd.PredictorDesign(
        delay=delay, n0=n0, a_n0=a, b_n0=b.astype(complex), exp_da=exp_da,
        gain=gain, a_cl=a_cl, lyap=sd.solve_lyapunov(a_cl),
        desired_poles=poles, transition=sd.TransitionSignal(0.2))
