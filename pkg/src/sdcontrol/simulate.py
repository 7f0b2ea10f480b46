"""Closed-loop simulation of the modal plant with delayed ramped feedback.

The integrated state couples a scalar subsystem x with the first n_modes
modal coefficients of the plant:

    x'   = -a1 x + (b1/L) <eta1, X> + c1 v(t)
    c_n' = lam_n c_n + sum_k b_{n,k} u_k(t - D) + d_n(t),
    d    = a2 x theta1 + b2 arctan((d2/L) <eta2, X>) theta2 + c2 v theta3,

with u = phi(t) K Z(t) fed by the predictor state.  Time stepping is
classical fixed-step RK4; delayed input values at stage times come from a
linear-interpolating ring buffer, and the new input sample is obtained by
solving the small implicit system produced by the trapezoid endpoint of
the predictor integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .buffers import DelayBuffer
from .certificates import CertificateBundle, evaluate_V
from .errors import (
    InsufficientDataError,
    InvalidParameterError,
    SimulationDivergedError,
)
from .predictor import PredictorDesign
from .spectral import SpectralSystem, project_profile

__all__ = [
    "SimConfig",
    "CouplingFields",
    "Trajectory",
    "coupling_f1",
    "coupling_f2",
    "step",
    "simulate",
    "decay_fit",
    "iss_envelope_check",
    "write_csv",
    "case_study_fields",
    "decoupled_fields",
    "case_study_disturbance",
    "case_study_initial_profile",
]


def case_study_disturbance(t: float) -> float:
    """Exogenous input of the built-in case study."""
    return math.sin(2.0 * t) * math.sin(5.0 * t)


def case_study_initial_profile(L: float) -> Callable[[np.ndarray], np.ndarray]:
    """Cubic initial condition of the built-in case study."""
    def profile(xi):
        xi = np.asarray(xi, dtype=float)
        return -5.0 * xi * (L / 2.0 - xi) * (L - xi)
    return profile


@dataclass(frozen=True)
class SimConfig:
    """Integrator settings.

    disturbance selects the exogenous input v: "none" (v = 0),
    "case-study" (sin 2t sin 5t), or any callable t -> v(t).
    """

    dt: float = 1e-3
    t_end: float = 10.0
    n_modes: int = 10
    record_stride: int = 1
    disturbance: str | Callable[[float], float] = "case-study"

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise InvalidParameterError(f"t_end must be nonnegative, got {self.t_end}")
        if self.n_modes < 1:
            raise InvalidParameterError("n_modes must be at least 1")
        if self.record_stride < 1:
            raise InvalidParameterError("record_stride must be at least 1")
        if isinstance(self.disturbance, str) and \
                self.disturbance not in ("none", "case-study"):
            raise InvalidParameterError(
                f"unknown disturbance selector {self.disturbance!r}")

    def v_function(self) -> Callable[[float], float]:
        if callable(self.disturbance):
            return self.disturbance
        if self.disturbance == "case-study":
            return case_study_disturbance
        return lambda t: 0.0


@dataclass(frozen=True)
class CouplingFields:
    """Interconnection data: scalar gains plus projected spatial profiles."""

    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float
    d2: float
    domain_length: float
    eta1: np.ndarray
    eta2: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    theta3: np.ndarray

    def __post_init__(self):
        if self.a1 <= 0:
            raise InvalidParameterError(f"a1 must be positive, got {self.a1}")
        if self.domain_length <= 0:
            raise InvalidParameterError("domain_length must be positive")
        n = np.atleast_1d(np.asarray(self.eta1, dtype=float)).size
        for name in ("eta1", "eta2", "theta1", "theta2", "theta3"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != (n,):
                raise InvalidParameterError("profile vectors must share one length")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_modes(self) -> int:
        return int(self.eta1.size)


def _profile_real(sys: SpectralSystem, fn, n_modes: int) -> np.ndarray:
    coeffs = project_profile(sys, fn, n_modes)
    if float(np.abs(coeffs.imag).max(initial=0.0)) > 1e-10:
        raise InvalidParameterError("profile projection is not real")
    return coeffs.real


def case_study_fields(sys: SpectralSystem, n_modes: int,
                      a1: float = 1.5, b1: float = 0.5, c1: float = 0.2,
                      a2: float = 0.7, b2: float = 0.55, c2: float = 10.0,
                      d2: float = 0.45) -> CouplingFields:
    """Projected interconnection of the built-in case study.

    Uses the unit-norm profiles sqrt(6 xi (L - xi)) / L^{3/2} (sensing and
    feedback bump), sqrt(2 xi) / L and sqrt(2 (L - xi)) / L (ramps).
    """
    L = sys.domain_length
    bump = _profile_real(
        sys, lambda xi: np.sqrt(6.0 * xi * (L - xi)) / L ** 1.5, n_modes)
    ramp_up = _profile_real(
        sys, lambda xi: np.sqrt(2.0 * xi) / L, n_modes)
    ramp_down = _profile_real(
        sys, lambda xi: np.sqrt(2.0 * (L - xi)) / L, n_modes)
    return CouplingFields(
        a1=a1, b1=b1, c1=c1, a2=a2, b2=b2, c2=c2, d2=d2,
        domain_length=L,
        eta1=bump, eta2=bump, theta1=ramp_up, theta2=bump, theta3=ramp_down,
    )


def decoupled_fields(n_modes: int, a1: float = 1.5,
                     domain_length: float = 1.0) -> CouplingFields:
    """Interconnection with all coupling gains zero (plant-only runs)."""
    z = np.zeros(n_modes)
    return CouplingFields(
        a1=a1, b1=0.0, c1=0.0, a2=0.0, b2=0.0, c2=0.0, d2=0.0,
        domain_length=domain_length,
        eta1=z, eta2=z, theta1=z, theta2=z, theta3=z,
    )


def _f1(fields: CouplingFields, x, coeffs, v):
    inner = fields.eta1 @ coeffs
    return -fields.a1 * x + (fields.b1 / fields.domain_length) * inner \
        + fields.c1 * v


def _f2(fields: CouplingFields, x, coeffs, v):
    inner = fields.eta2 @ coeffs
    bent = np.arctan((fields.d2 / fields.domain_length) * inner)
    return (fields.a2 * x) * fields.theta1 + (fields.b2 * bent) * fields.theta2 \
        + (fields.c2 * v) * fields.theta3


def _assert_real(value, what: str):
    arr = np.asarray(value)
    scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
    if float(np.abs(arr.imag).max(initial=0.0)) > 1e-10 * scale:
        raise InvalidParameterError(f"{what} has a non-negligible imaginary part")
    return arr.real


def coupling_f1(fields: CouplingFields, x: float, coeffs, v: float) -> float:
    """Scalar subsystem drift -a1 x + (b1/L) <eta1, X> + c1 v."""
    val = _f1(fields, complex(x), np.asarray(coeffs, dtype=complex), v)
    return float(_assert_real(val, "coupling_f1"))


def coupling_f2(fields: CouplingFields, x: float, coeffs, v: float) -> np.ndarray:
    """Modal disturbance injected by the scalar subsystem (length n_modes)."""
    val = _f2(fields, complex(x), np.asarray(coeffs, dtype=complex), v)
    return np.asarray(_assert_real(val, "coupling_f2"), dtype=float)


def step(sys: SpectralSystem, design: PredictorDesign,
         fields: CouplingFields | None, history: DelayBuffer, t: float,
         dt: float, x: complex, coeffs: np.ndarray,
         v_fn: Callable[[float], float]) -> tuple[complex, np.ndarray]:
    """One classical RK4 step of the coupled (x, modal) state.

    Delayed inputs at the half and full stage times are linearly
    interpolated from the history buffer; the exogenous input v is
    evaluated exactly at the stage times.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    n = coeffs.size
    lam = sys.eigenvalues[:n]
    bmat = sys.input_coeffs[:n]
    delay = design.delay

    def deriv(tau, x_, c_):
        u_d = history.lookup(tau - delay)
        v = v_fn(tau)
        dc = lam * c_ + bmat @ u_d
        if fields is not None:
            dc = dc + _f2(fields, x_, c_, v)
            dx = _f1(fields, x_, c_, v)
        else:
            dx = 0.0 + 0.0j
        return dx, dc

    kx1, kc1 = deriv(t, x, coeffs)
    kx2, kc2 = deriv(t + dt / 2, x + dt / 2 * kx1, coeffs + dt / 2 * kc1)
    kx3, kc3 = deriv(t + dt / 2, x + dt / 2 * kx2, coeffs + dt / 2 * kc2)
    kx4, kc4 = deriv(t + dt, x + dt * kx3, coeffs + dt * kc3)
    x_new = x + dt / 6 * (kx1 + 2 * kx2 + 2 * kx3 + kx4)
    c_new = coeffs + dt / 6 * (kc1 + 2 * kc2 + 2 * kc3 + kc4)
    return x_new, c_new


@dataclass(frozen=True)
class Trajectory:
    """Recorded closed-loop run.

    Arrays are aligned by row; x, norm_x, u, norm_d and V are real, coeffs
    and z keep the internal complex dtype (imaginary parts are negligible
    for the shipped plant).
    """

    t: np.ndarray
    x: np.ndarray
    coeffs: np.ndarray
    norm_x: np.ndarray
    u: np.ndarray
    norm_d: np.ndarray
    V: np.ndarray
    z: np.ndarray
    dt: float
    delay: float
    t0: float
    n0: int
    has_certificate: bool

    def __len__(self) -> int:
        return int(self.t.size)


def simulate(config: SimConfig, sys: SpectralSystem, design: PredictorDesign,
             fields: CouplingFields | None, x0: float, x0_coeffs,
             bundle: CertificateBundle | None = None) -> Trajectory:
    """Run the closed loop from t = 0 to t_end.

    The loop is open (u keeps its zero history) for t < D by construction;
    the ramp phi then blends the predictor feedback in over [D-free time]
    automatically since u(t) = phi(t) K Z(t) with phi starting at 0.

    Args:
        fields: interconnection, or None for a plant-only run.
        x0: scalar subsystem initial value.
        x0_coeffs: n_modes initial modal coefficients.
        bundle: certificate weights; when given, the Lyapunov functional is
            recorded per row, otherwise the V column is zero.

    Raises:
        SimulationDivergedError: the state left the finite range.
    """
    n = config.n_modes
    if not design.n0 <= n <= sys.n_max:
        raise InvalidParameterError(
            f"n_modes must lie in [{design.n0}, {sys.n_max}], got {n}")
    if fields is not None and fields.n_modes != n:
        raise InvalidParameterError(
            f"fields cover {fields.n_modes} modes, config asks for {n}")
    if design.delay <= 0:
        raise InvalidParameterError("simulation requires a positive delay")
    if config.dt >= design.delay:
        raise InvalidParameterError(
            f"dt = {config.dt} must be smaller than the delay {design.delay}")
    if bundle is not None and design.lyap is None:
        raise InvalidParameterError(
            "certificate recording needs a design with a Lyapunov matrix")

    dt = config.dt
    delay = design.delay
    n0 = design.n0
    m = sys.input_dim
    v_fn = config.v_function()
    coeffs = np.asarray(x0_coeffs, dtype=complex)
    if coeffs.shape != (n,):
        raise InvalidParameterError(f"x0_coeffs must have shape ({n},)")
    x = complex(x0)

    lam_n0 = np.diag(design.a_n0)
    edab = design.exp_da @ design.b_n0  # exp(-DA) B
    gain = design.gain

    n_steps = int(math.floor(config.t_end / dt + 1e-9))
    rows: list[tuple] = []

    ubuf = DelayBuffer(dt, delay, m)
    zbuf = DelayBuffer(dt, delay, n0)

    def disturbance_at(t, x_, c_):
        if fields is None:
            return np.zeros(n)
        return coupling_f2(fields, x_, c_, v_fn(t))

    def record(t, x_, c_, u_, z_):
        d_vec = disturbance_at(t, x_, c_)
        if bundle is not None:
            vval = evaluate_V(sys, design, bundle, t, zbuf, c_,
                              ubuf.lookup(t - delay))
        else:
            vval = 0.0
        rows.append((t, x_, c_.copy(), float(np.linalg.norm(c_)), u_.copy(),
                     float(np.linalg.norm(d_vec)), vval, z_.copy()))

    if n_steps > 0:
        z = coeffs[:n0].copy()
        u = np.zeros(m, dtype=complex)
        ubuf.append(0.0, u)
        zbuf.append(0.0, z)
        record(0.0, x, coeffs, u, z)

        for i in range(1, n_steps + 1):
            t_prev = (i - 1) * dt
            t = i * dt
            x, coeffs = step(sys, design, fields, ubuf, t_prev, dt, x,
                             coeffs, v_fn)
            if not (np.isfinite(x.real) and np.isfinite(x.imag)
                    and np.all(np.isfinite(coeffs.view(float)))):
                raise SimulationDivergedError(
                    f"state became non-finite at t = {t:.6g}")

            # predictor integral over [t-D, t] with the not-yet-known
            # endpoint sample split off; solving the small linear system
            # makes the stored u(t) and Z(t) mutually consistent
            s, uw = ubuf.window(t - delay, t - dt)
            kern = np.exp(np.outer(t - delay - s, lam_n0))
            known = np.trapezoid(kern * (uw @ design.b_n0.T), s, axis=0)
            g_last = np.exp((dt - delay) * lam_n0) * (design.b_n0 @ uw[-1])
            known = known + (dt / 2.0) * g_last
            phi_t = float(design.transition.phi(t))
            mat = np.eye(n0, dtype=complex) - (dt / 2.0) * phi_t * (edab @ gain)
            z = np.linalg.solve(mat, coeffs[:n0] + known)
            u = phi_t * (gain @ z)
            ubuf.append(t, u)
            zbuf.append(t, z)
            if i % config.record_stride == 0 or i == n_steps:
                record(t, x, coeffs, u, z)

    if rows:
        t_arr = np.array([r[0] for r in rows])
        x_arr = _assert_real(np.array([r[1] for r in rows]), "scalar state")
        c_arr = np.stack([r[2] for r in rows])
        nx_arr = np.array([r[3] for r in rows])
        u_arr = np.stack([r[4] for r in rows])
        nd_arr = np.array([r[5] for r in rows])
        v_arr = np.array([r[6] for r in rows])
        z_arr = np.stack([r[7] for r in rows])
    else:
        t_arr = np.zeros(0)
        x_arr = np.zeros(0)
        c_arr = np.zeros((0, n), dtype=complex)
        nx_arr = np.zeros(0)
        u_arr = np.zeros((0, m), dtype=complex)
        nd_arr = np.zeros(0)
        v_arr = np.zeros(0)
        z_arr = np.zeros((0, n0), dtype=complex)

    return Trajectory(
        t=t_arr, x=x_arr, coeffs=c_arr, norm_x=nx_arr, u=u_arr,
        norm_d=nd_arr, V=v_arr, z=z_arr,
        dt=dt, delay=delay, t0=design.transition.t0, n0=n0,
        has_certificate=bundle is not None,
    )


def decay_fit(traj: Trajectory, t_start: float) -> tuple[float, float]:
    """Least-squares exponential fit norm_x ~ amplitude * exp(-rate * t).

    Only samples with t >= t_start and norm_x > 0 enter the fit; at least
    10 are required.
    """
    mask = (traj.t >= t_start - 1e-12) & (traj.norm_x > 0.0)
    if int(mask.sum()) < 10:
        raise InsufficientDataError(
            f"need at least 10 usable samples after t = {t_start}, "
            f"got {int(mask.sum())}")
    slope, intercept = np.polyfit(traj.t[mask], np.log(traj.norm_x[mask]), 1)
    return float(-slope), float(math.exp(intercept))


def iss_envelope_check(traj: Trajectory, bundle: CertificateBundle,
                       d_sup: float) -> tuple[bool, float]:
    """Check V(t) against its certified decay-plus-offset envelope.

    For every recorded t >= D + t0 the inequality

        V(t) <= exp(-2 kappa0 (t - D - t0)) V(D + t0)
                + C6 / (2 kappa0) * d_sup^2

    must hold within 5 percent slack.  Returns (ok, worst ratio).
    """
    if not traj.has_certificate:
        raise InvalidParameterError("trajectory carries no recorded V")
    t_on = traj.delay + traj.t0
    mask = traj.t >= t_on - 1e-12
    if int(mask.sum()) < 2:
        raise InsufficientDataError(
            f"no recorded samples beyond t = {t_on}")
    v_on = float(np.interp(t_on, traj.t, traj.V))
    t_rel = traj.t[mask] - t_on
    rhs = (np.exp(-2.0 * bundle.kappa0 * t_rel) * v_on
           + bundle.C6 / (2.0 * bundle.kappa0) * d_sup ** 2)
    v_seg = traj.V[mask]
    tiny = 1e-300
    ratios = v_seg / np.maximum(rhs, tiny)
    worst = float(ratios.max())
    return worst <= 1.05, worst


_CSV_PRECISION = ".12g"


def write_csv(traj: Trajectory, path) -> None:
    """Write the trajectory as CSV: t,x,normX,V,u1..um,normd,c1..cN.

    Values carry 12 significant digits; rows end with a bare newline.
    """
    n = traj.coeffs.shape[1] if traj.coeffs.ndim == 2 else 0
    m = traj.u.shape[1] if traj.u.ndim == 2 else 0
    header = (["t", "x", "normX", "V"]
              + [f"u{j + 1}" for j in range(m)]
              + ["normd"]
              + [f"c{k + 1}" for k in range(n)])
    u_real = _assert_real(traj.u, "recorded input") if traj.u.size else \
        np.zeros((0, m))
    c_real = _assert_real(traj.coeffs, "recorded coefficients") if \
        traj.coeffs.size else np.zeros((0, n))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(traj)):
            vals = ([traj.t[i], traj.x[i], traj.norm_x[i], traj.V[i]]
                    + list(u_real[i]) + [traj.norm_d[i]] + list(c_real[i]))
            fh.write(",".join(format(v, _CSV_PRECISION) for v in vals) + "\n")
