"""Explicit stability certificates for the ramped, delay-compensated loop.

Given a design (gain K, Lyapunov matrix P) and three scalar weights
(beta, gamma1, gamma2), the functions here compute the explicit constant
family C1..C8 and the decay rate kappa0 entering the closed-loop estimates

    ||X(t)||   <= C4 sqrt(V(t)),
    ||u(t)||   <= ||K|| / sqrt(C2g1) * sqrt(V(t)),
    V(t)       <= exp(-2 kappa0 (t - D - t0)) V(D + t0)
                  + C6 / (2 kappa0) * sup ||d||^2,

where V is the weighted Lyapunov functional evaluated by evaluate_V.  The
product C4 sqrt(C6 / (2 kappa0)) is the plant's disturbance-to-state gain;
interconnection with Lipschitz couplings is certified by small_gain_margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .buffers import DelayBuffer
from .errors import (
    CertificateParameterError,
    InfeasibleCertificateError,
    InvalidParameterError,
)
from .predictor import PredictorDesign
from .spectral import SpectralSystem, check_truncation

__all__ = [
    "CertificateBundle",
    "CouplingConstants",
    "SearchConfig",
    "compute_constants",
    "evaluate_V",
    "optimize_parameters",
    "coupling_constants",
    "small_gain_margin",
    "no_blowup_margin",
    "render_certificate",
    "parse_certificate",
    "nelder_mead",
]


@dataclass(frozen=True)
class CertificateBundle:
    """Certificate constants for one choice of weights (beta, gamma1, gamma2)."""

    beta: float
    gamma1: float
    gamma2: float
    C1: float
    C2g1: float
    C3g2: float
    C4: float
    C5: float
    C6: float
    C7: float
    C8: float
    kappa0: float
    small_gain_constant: float
    alpha: float
    lam_min_P: float
    lam_max_P: float
    norm_P: float
    norm_BK: float


@dataclass(frozen=True)
class CouplingConstants:
    """Lipschitz-type bounds of an interconnection.

    ct0, ct1, ct2 bound the scalar subsystem's response (initial condition,
    state coupling, exogenous input); d1, d2, d3 bound the disturbance the
    scalar subsystem injects back into the plant.
    """

    ct0: float
    ct1: float
    ct2: float
    d1: float
    d2: float
    d3: float

    def __post_init__(self):
        if self.ct0 < 1.0:
            raise InvalidParameterError("ct0 must be at least 1")
        for name in ("ct1", "ct2", "d1", "d2", "d3"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be nonnegative")


def _spectral_norm(m: np.ndarray) -> float:
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    return float(np.linalg.svd(m, compute_uv=False)[0]) if m.size else 0.0


@dataclass(frozen=True)
class _BaseConstants:
    """Weight-independent part of the certificate arithmetic."""

    alpha: float
    lam_min_p: float
    lam_max_p: float
    norm_p: float
    norm_a: float
    norm_k: float
    norm_edabk: float
    norm_bk_sq: float
    c1: float
    c5: float


def _base_constants(sys: SpectralSystem, design: PredictorDesign) -> _BaseConstants:
    if design.lyap is None:
        raise InvalidParameterError("design carries no Lyapunov matrix")
    alpha = check_truncation(sys, design.n0).alpha
    m_r = sys.riesz_lower
    m = sys.input_dim
    gain = design.gain

    eig_p = np.linalg.eigvalsh(design.lyap)
    lam_min_p = float(eig_p.min())
    lam_max_p = float(eig_p.max())

    norm_a = float(np.abs(np.diag(design.a_n0)).max())
    norm_bk_trunc = _spectral_norm(design.b_n0 @ gain)
    norm_k = _spectral_norm(gain)
    norm_edabk = _spectral_norm(design.exp_da @ design.b_n0 @ gain)

    # operator norm of the composite input map v -> B K v via the lifting Gram
    kgk = gain.conj().T @ sys.lifting_gram.astype(complex) @ gain
    norm_bk_sq = float(np.linalg.eigvalsh(0.5 * (kgk + kgk.conj().T)).max())
    norm_bk_sq = max(norm_bk_sq, 0.0)

    c1 = 2.0 * max(1.0, design.delay
                   * math.exp(2.0 * design.delay * norm_a) * norm_bk_trunc ** 2)

    rows = np.asarray(gain, dtype=complex)
    row_norms_sq = np.sum(np.abs(rows) ** 2, axis=1)
    rowacl_norms_sq = np.sum(np.abs(rows @ design.a_cl) ** 2, axis=1)
    c5 = (2.0 * m / (alpha * m_r)) * float(
        np.sum(sys.lifting_norm_AB ** 2 * row_norms_sq
               + sys.lifting_norm_B ** 2 * rowacl_norms_sq))

    return _BaseConstants(
        alpha=alpha, lam_min_p=lam_min_p, lam_max_p=lam_max_p,
        norm_p=lam_max_p,  # P is Hermitian positive definite
        norm_a=norm_a, norm_k=norm_k, norm_edabk=norm_edabk,
        norm_bk_sq=norm_bk_sq, c1=c1, c5=c5,
    )


def compute_constants(sys: SpectralSystem, design: PredictorDesign,
                      beta: float, gamma1: float, gamma2: float) -> CertificateBundle:
    """Evaluate the full certificate constant family.

    Raises:
        CertificateParameterError: a feasibility inequality fails; the
            message names the violated bound.
    """
    beta, gamma1, gamma2 = float(beta), float(gamma1), float(gamma2)
    if not 0.0 < beta < 1.0:
        raise CertificateParameterError(
            f"beta must lie strictly inside (0, 1), got {beta}")
    if gamma1 <= 0 or gamma2 <= 0:
        raise CertificateParameterError("gamma weights must be positive")

    base = _base_constants(sys, design)
    alpha = base.alpha
    m_r = sys.riesz_lower
    m_R = sys.riesz_upper
    delay = design.delay
    lam_min_p, lam_max_p = base.lam_min_p, base.lam_max_p
    norm_p = base.norm_p
    norm_bk_sq = base.norm_bk_sq
    norm_bk = math.sqrt(norm_bk_sq)
    c1, c5 = base.c1, base.c5

    if gamma1 <= c1 / lam_min_p:
        raise CertificateParameterError(
            f"gamma1 = {gamma1:.6g} must exceed C1/lam_min(P) = "
            f"{c1 / lam_min_p:.6g}")
    bound_bk = norm_bk_sq / (m_r * lam_min_p)
    if gamma2 <= bound_bk:
        raise CertificateParameterError(
            f"gamma2 = {gamma2:.6g} must exceed ||BK||^2/(m_r lam_min(P)) = "
            f"{bound_bk:.6g}")
    bound_c5 = c5 / (1.0 - beta)
    if gamma2 <= bound_c5:
        raise CertificateParameterError(
            f"gamma2 = {gamma2:.6g} must exceed C5/(1 - beta) = {bound_c5:.6g}")

    c2g1 = gamma1 * lam_min_p - c1
    c3g2 = gamma2 * lam_min_p - norm_bk_sq / m_r
    c4 = math.sqrt(2.0 * m_R) + norm_bk / math.sqrt(c3g2)
    kappa0 = 0.5 * min(
        (1.0 - beta) / lam_max_p,
        (1.0 - beta - c5 / gamma2) / lam_max_p,
        alpha / 2.0,
    )
    c6 = (1.0 / m_r) * (
        2.0 * (m_r + norm_bk_sq) / (alpha * m_r)
        + (gamma1 * (1.0 + delay) + gamma2) * norm_p ** 2 / beta)
    c7 = base.norm_a + base.norm_edabk + 0.5
    c8 = base.norm_k * (design.transition.max_slope
                        + base.norm_a + base.norm_edabk)
    sgc = c4 * math.sqrt(c6 / (2.0 * kappa0))

    return CertificateBundle(
        beta=float(beta), gamma1=float(gamma1), gamma2=float(gamma2),
        C1=c1, C2g1=c2g1, C3g2=c3g2, C4=c4, C5=c5, C6=c6, C7=c7, C8=c8,
        kappa0=kappa0, small_gain_constant=sgc, alpha=alpha,
        lam_min_P=lam_min_p, lam_max_P=lam_max_p, norm_P=norm_p,
        norm_BK=norm_bk,
    )


def evaluate_V(sys: SpectralSystem, design: PredictorDesign,
               bundle: CertificateBundle, t: float, z_history: DelayBuffer,
               x_coeffs: np.ndarray, u_delay: np.ndarray) -> float:
    """Weighted Lyapunov functional at time t.

    V = gamma1 [Z* P Z + int_{t-D}^t phi(s) Z(s)* P Z(s) ds]
        + gamma2 phi(t - D) Z(t-D)* P Z(t-D)
        + 1/2 sum_{k > n0} |c_k - <lifting u(t-D)>_k|^2.

    Args:
        z_history: DelayBuffer of predictor states covering [t - D, t].
        x_coeffs: modal state (length >= n0).
        u_delay: the delayed input u(t - D).
    """
    if design.lyap is None:
        raise InvalidParameterError("design carries no Lyapunov matrix")
    p = design.lyap
    coeffs = np.atleast_1d(np.asarray(x_coeffs, dtype=complex))
    if coeffs.size < design.n0 or coeffs.size > sys.n_max:
        raise InvalidParameterError(
            f"x_coeffs length must lie in [{design.n0}, {sys.n_max}]")
    u_delay = np.asarray(u_delay, dtype=complex)

    z_t = z_history.lookup(t)
    term_now = float(np.vdot(z_t, p @ z_t).real)
    s, zw = z_history.window(t - design.delay, t)
    phis = design.transition.phi(s)
    quad = np.einsum("ij,jk,ik->i", zw.conj(), p, zw).real
    integral = float(np.trapezoid(phis * quad, s))
    z_del = z_history.lookup(t - design.delay)
    phi_del = float(design.transition.phi(t - design.delay))
    term_del = phi_del * float(np.vdot(z_del, p @ z_del).real)

    tail = coeffs[design.n0:] - sys.lifting_coeffs[design.n0:coeffs.size] @ u_delay
    tail_term = 0.5 * float(np.sum(np.abs(tail) ** 2))

    v = (bundle.gamma1 * (term_now + integral)
         + bundle.gamma2 * term_del + tail_term)
    # quadratic forms with P > 0; clamp float dust
    return max(v, 0.0)


def nelder_mead(f: Callable[[np.ndarray], float], x0: np.ndarray,
                step: float = 0.05, rel_tol: float = 1e-6,
                max_iter: int = 2000) -> tuple[np.ndarray, float]:
    """Derivative-free simplex descent with fixed classical coefficients.

    Reflection 1, expansion 2, contraction 0.5, shrink 0.5.  The initial
    simplex scales each coordinate of the start point by (1 + step).
    Terminates when every vertex agrees with the best one to rel_tol per
    coordinate (relative to max(1, |coordinate|)) or at the iteration cap,
    returning the best vertex either way.  Fully deterministic.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] = v[i] * (1.0 + step) if v[i] != 0.0 else step
        simplex.append(v)
    simplex = np.array(simplex)
    fvals = np.array([f(v) for v in simplex])

    for _ in range(max_iter):
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        best = simplex[0]
        spread = np.abs(simplex - best) / np.maximum(1.0, np.abs(best))
        if float(spread.max()) < rel_tol:
            break
        centroid = simplex[:-1].mean(axis=0)
        worst, f_worst = simplex[-1], fvals[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            simplex[-1], fvals[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < f_worst:
                xc = centroid + 0.5 * (xr - centroid)
                fc = f(xc)
                if fc <= fr:
                    simplex[-1], fvals[-1] = xc, fc
                    continue
            else:
                xc = centroid - 0.5 * (centroid - worst)
                fc = f(xc)
                if fc < f_worst:
                    simplex[-1], fvals[-1] = xc, fc
                    continue
            simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
            fvals[1:] = [f(v) for v in simplex[1:]]

    i_best = int(np.argmin(fvals))
    return simplex[i_best], float(fvals[i_best])


@dataclass(frozen=True)
class SearchConfig:
    """Grid scan plus simplex-descent settings for the weight search."""

    beta_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    gamma_multipliers: tuple = (1.5, 3.0, 10.0)
    nm_max_iter: int = 2000
    nm_rel_tol: float = 1e-6
    simplex_step: float = 0.05
    n_starts: int = 3


def optimize_parameters(sys: SpectralSystem, design: PredictorDesign,
                        search: SearchConfig | None = None) -> CertificateBundle:
    """Minimize the disturbance-to-state gain over (beta, gamma1, gamma2).

    A coarse feasible-start scan (beta grid crossed with multiples of each
    weight's feasibility lower bound) seeds a few simplex descents on the
    penalized objective (infeasible points score +inf); the best feasible
    bundle wins.  Deterministic: same inputs give a bitwise-identical
    bundle.

    Raises:
        InfeasibleCertificateError: the scan finds no feasible start.
    """
    if search is None:
        search = SearchConfig()

    def objective(x: np.ndarray) -> float:
        b, g1, g2 = float(x[0]), float(x[1]), float(x[2])
        if not (0.0 < b < 1.0) or g1 <= 0.0 or g2 <= 0.0:
            return math.inf
        try:
            return compute_constants(sys, design, b, g1, g2).small_gain_constant
        except CertificateParameterError:
            return math.inf

    base = _base_constants(sys, design)
    g1_min = base.c1 / base.lam_min_p
    bk_bound = base.norm_bk_sq / (sys.riesz_lower * base.lam_min_p)

    candidates = []
    for beta in search.beta_grid:
        g2_min = max(bk_bound, base.c5 / (1.0 - beta))
        for m1 in search.gamma_multipliers:
            for m2 in search.gamma_multipliers:
                x = np.array([beta, m1 * g1_min, m2 * g2_min])
                fx = objective(x)
                if math.isfinite(fx):
                    candidates.append((fx, x))
    if not candidates:
        raise InfeasibleCertificateError(
            "the feasible-start scan found no admissible weights")
    candidates.sort(key=lambda c: c[0])

    best_x, best_f = None, math.inf
    for fx, x in candidates[:search.n_starts]:
        xs, fs = nelder_mead(objective, x, step=search.simplex_step,
                             rel_tol=search.nm_rel_tol,
                             max_iter=search.nm_max_iter)
        if fs < best_f:
            best_x, best_f = xs, fs
    if best_x is None or not math.isfinite(best_f):
        raise InfeasibleCertificateError("the weight search failed to converge")
    return compute_constants(sys, design, *best_x)


def coupling_constants(a1: float, b1: float, c1: float, a2: float, b2: float,
                       c2: float, d2: float, L: float) -> CouplingConstants:
    """Lipschitz bounds for the built-in scalar/plant interconnection.

    The scalar subsystem x' = -a1 x + (b1/L) <eta, X> + c1 v feeds back the
    in-domain disturbance a2 x theta1 + b2 arctan((d2/L) <eta, X>) theta2 +
    c2 v theta3 with unit-norm profiles.
    """
    if a1 <= 0:
        raise InvalidParameterError(f"a1 must be positive, got {a1}")
    if L <= 0:
        raise InvalidParameterError(f"L must be positive, got {L}")
    return CouplingConstants(
        ct0=math.sqrt(2.0),
        ct1=2.0 * abs(b1) / (a1 * L),
        ct2=2.0 * abs(c1) / a1,
        d1=abs(a2),
        d2=abs(b2 * d2) / L,
        d3=abs(c2),
    )


def small_gain_margin(bundle: CertificateBundle,
                      coupling: CouplingConstants) -> float:
    """1 - (d1 ct1 + d2) * C4 sqrt(C6/(2 kappa0)); positive certifies the loop."""
    return 1.0 - (coupling.d1 * coupling.ct1 + coupling.d2) \
        * bundle.small_gain_constant


def no_blowup_margin(bundle: CertificateBundle, coupling: CouplingConstants,
                     c10: float) -> float:
    """Margin variant with a caller-supplied squared-gain constant C10."""
    if c10 < 0:
        raise InvalidParameterError(f"c10 must be nonnegative, got {c10}")
    return 1.0 - (coupling.d1 * coupling.ct1 + coupling.d2) \
        * bundle.C4 * math.sqrt(c10)


_REPORT_KEYS = ("beta", "gamma1", "gamma2", "C1", "C2g1", "C3g2", "C4", "C5",
                "C6", "kappa0", "small_gain_constant", "margin")


def render_certificate(bundle: CertificateBundle, margin: float) -> str:
    """Flat `name = value` report with a fixed key set and order."""
    values = {
        "beta": bundle.beta, "gamma1": bundle.gamma1, "gamma2": bundle.gamma2,
        "C1": bundle.C1, "C2g1": bundle.C2g1, "C3g2": bundle.C3g2,
        "C4": bundle.C4, "C5": bundle.C5, "C6": bundle.C6,
        "kappa0": bundle.kappa0,
        "small_gain_constant": bundle.small_gain_constant,
        "margin": margin,
    }
    return "".join(f"{k} = {float(values[k])!r}\n" for k in _REPORT_KEYS)


def parse_certificate(text: str) -> dict[str, float]:
    """Read back a report produced by render_certificate."""
    out: dict[str, float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = float(value)
    missing = [k for k in _REPORT_KEYS if k not in out]
    if missing:
        raise InvalidParameterError(f"report is missing keys: {missing}")
    return out
