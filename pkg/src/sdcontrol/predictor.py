"""Gain synthesis and delay compensation for the retained modal block.

The retained modes Y satisfy Y'(t) = A Y(t) + B u(t - D).  The predictor
state

    Z(t) = Y(t) + int_{t-D}^{t} exp((t - s - D) A) B u(s) ds

turns the delayed loop into Z'(t) = A Z(t) + exp(-D A) B u(t) + d(t), so a
gain K placing the spectrum of A + exp(-D A) B K yields, with the smoothly
ramped feedback u = phi(t) K Z(t), an exponentially stable closed loop once
the ramp has completed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .buffers import DelayBuffer
from .errors import (
    ConvergenceFailureError,
    InvalidParameterError,
    SynthesisFailureError,
)
from .spectral import SpectralSystem, pbh_controllable

__all__ = [
    "TransitionSignal",
    "PredictorDesign",
    "transition_value",
    "diagonal_exponential",
    "place_poles",
    "solve_lyapunov",
    "design_predictor",
    "zero_gain_design",
    "artstein_state",
    "invert_artstein",
    "control_input",
]


@dataclass(frozen=True)
class TransitionSignal:
    """Quintic ramp from 0 to 1 over [0, t0] with two flat derivatives.

    phi(t) = 10 s^3 - 15 s^4 + 6 s^5 with s = clip(t / t0, 0, 1); phi, phi'
    and phi'' are continuous and phi' = phi'' = 0 at both ends.  The peak
    slope is 15 / (8 t0).
    """

    t0: float

    def __post_init__(self):
        if self.t0 <= 0:
            raise InvalidParameterError(f"t0 must be positive, got {self.t0}")

    def phi(self, t):
        s = np.clip(np.asarray(t, dtype=float) / self.t0, 0.0, 1.0)
        return s ** 3 * (10.0 + s * (-15.0 + 6.0 * s))

    def phi_dot(self, t):
        s = np.clip(np.asarray(t, dtype=float) / self.t0, 0.0, 1.0)
        return 30.0 * s ** 2 * (1.0 - s) ** 2 / self.t0

    @property
    def max_slope(self) -> float:
        return 15.0 / (8.0 * self.t0)


def transition_value(sig: TransitionSignal, t: float) -> tuple[float, float]:
    """Ramp value and slope at time t."""
    return float(sig.phi(t)), float(sig.phi_dot(t))


def diagonal_exponential(a: np.ndarray, s: float) -> np.ndarray:
    """Entrywise matrix exponential exp(s * a) for a diagonal matrix."""
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    if a.shape[0] != a.shape[1]:
        raise InvalidParameterError("matrix must be square")
    off = a - np.diag(np.diag(a))
    if off.size and float(np.abs(off).max()) > 1e-12 * max(1.0, float(np.abs(a).max())):
        raise InvalidParameterError("matrix must be diagonal")
    return np.diag(np.exp(s * np.diag(a)))


def _is_real(*arrays, tol: float = 1e-12) -> bool:
    return all(float(np.abs(np.asarray(a).imag).max(initial=0.0)) <= tol
               for a in arrays)


def _canonical_poles(poles: Sequence[complex]) -> tuple[complex, ...]:
    # quantize the sort key so that eigenvalue roundoff cannot reorder a
    # conjugate pair whose real parts differ only in the last bits
    def key(z):
        return (round(z.real, 9), round(z.imag, 9))

    return tuple(sorted((complex(p) for p in poles), key=key))


def _seed_directions(m: int):
    """Deterministic sequence of rank-one reduction directions.

    Starts from the symmetric direction; on failure each coordinate is
    nudged in turn, with the smallest deviation first and the magnitude
    doubling every full round.
    """
    q0 = np.ones(m) / math.sqrt(m)
    yield q0
    for trial in range(4 * m):
        j = trial % m
        mag = 0.1 * 2.0 ** (trial // m)
        e = np.zeros(m)
        e[j] = mag
        q = q0 + e
        yield q / np.linalg.norm(q)


def _ackermann(lam: np.ndarray, b: np.ndarray, poles: Sequence[complex]) -> np.ndarray:
    """Single-input pole placement gain k with spec(diag(lam) + b k) = poles."""
    n = lam.size
    ctrl = b[:, None] * lam[:, None] ** np.arange(n)[None, :]
    # p(A) is diagonal for diagonal A: evaluate the desired characteristic
    # polynomial at each eigenvalue
    pvals = np.ones(n, dtype=complex)
    for p in poles:
        pvals *= lam - p
    w = np.linalg.solve(ctrl.T, np.eye(n, dtype=complex)[:, -1])
    return -(w * pvals)


def place_poles(a: np.ndarray, b_tilde: np.ndarray,
                poles: Sequence[complex]) -> np.ndarray:
    """Pole placement for a diagonal pair through a rank-one gain.

    The gain has the form K = q k with a fixed direction q in input space
    and a single-input Ackermann row k, so the result is deterministic.  If
    the collapsed pair (a, b_tilde q) is uncontrollable for the default
    direction, a fixed sequence of perturbed directions is tried.

    Args:
        a: diagonal state matrix (n, n).
        b_tilde: effective input matrix (n, m).
        poles: n desired closed-loop eigenvalues; with real data the set
            must be closed under conjugation.

    Returns:
        K of shape (m, n) with spec(a + b_tilde @ K) = poles (within 1e-6).
    """
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    b_tilde = np.atleast_2d(np.asarray(b_tilde, dtype=complex))
    n = a.shape[0]
    if b_tilde.shape[0] != n:
        raise InvalidParameterError("b_tilde must have one row per state")
    m = b_tilde.shape[1]
    diagonal_exponential(a, 0.0)  # rejects non-diagonal state matrices
    lam = np.diag(a)
    if len(poles) != n:
        raise InvalidParameterError(f"need exactly {n} poles, got {len(poles)}")
    poles = _canonical_poles(poles)

    real_data = _is_real(a, b_tilde)
    if real_data:
        conj_set = _canonical_poles(np.conj(poles))
        if any(abs(p - q) > 1e-12 * max(1.0, abs(p))
               for p, q in zip(poles, conj_set)):
            raise InvalidParameterError(
                "poles must be closed under conjugation for a real system")

    if not pbh_controllable(lam, b_tilde):
        raise SynthesisFailureError("the pair (A, B) is not controllable")
    # a rank-one gain can only place simple spectra
    if np.any(np.abs(np.subtract.outer(lam, lam) + np.eye(n)) <
              1e-9 * np.maximum(1.0, np.abs(lam))[:, None]):
        raise SynthesisFailureError(
            "rank-one reduction requires pairwise distinct eigenvalues")

    for q in _seed_directions(m):
        bq = b_tilde @ q.astype(complex)
        if float(np.abs(bq).min()) <= 1e-9 * max(1.0, float(np.abs(bq).max())):
            continue
        k = _ackermann(lam, bq, poles)
        gain = np.outer(q, k)
        achieved = _canonical_poles(np.linalg.eigvals(a + b_tilde @ gain))
        err = max(abs(p - q_) for p, q_ in zip(poles, achieved))
        if err <= 1e-6 * max(1.0, max(abs(p) for p in poles)):
            if real_data:
                gain = gain.real.astype(complex)
            return gain
    raise SynthesisFailureError(
        "rank-one reduction failed for every deterministic direction")


def solve_lyapunov(a_cl: np.ndarray) -> np.ndarray:
    """Solve A* P + P A = -I for Hermitian positive definite P.

    Uses the Kronecker vectorization of the Sylvester form and then
    symmetrizes; the residual must come back below 1e-9.

    Raises:
        InvalidParameterError: a_cl is not Hurwitz.
        SynthesisFailureError: the linear solve is singular or inaccurate.
    """
    a_cl = np.atleast_2d(np.asarray(a_cl, dtype=complex))
    n = a_cl.shape[0]
    if a_cl.shape[1] != n:
        raise InvalidParameterError("a_cl must be square")
    if float(np.linalg.eigvals(a_cl).real.max()) >= 0.0:
        raise InvalidParameterError("a_cl must be Hurwitz")
    eye = np.eye(n, dtype=complex)
    mat = np.kron(eye, a_cl.conj().T) + np.kron(a_cl.T, eye)
    rhs = (-eye).reshape(-1, order="F")
    try:
        vec = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SynthesisFailureError(f"Lyapunov solve failed: {exc}") from exc
    p = vec.reshape((n, n), order="F")
    p = 0.5 * (p + p.conj().T)
    residual = float(np.abs(a_cl.conj().T @ p + p @ a_cl + eye).max())
    if residual > 1e-9:
        raise SynthesisFailureError(
            f"Lyapunov residual {residual:.3e} exceeds 1e-9")
    if float(np.linalg.eigvalsh(p).min()) <= 0.0:
        raise SynthesisFailureError("Lyapunov solution is not positive definite")
    return p


@dataclass(frozen=True)
class PredictorDesign:
    """Everything needed to run and certify the delayed feedback loop.

    Attributes:
        delay: input delay D >= 0.
        n0: number of actively controlled modes.
        a_n0: (n0, n0) diagonal block of retained eigenvalues.
        b_n0: (n0, m) retained input gains.
        exp_da: exp(-delay * a_n0).
        gain: feedback gain K (m, n0); the applied input is phi(t) K Z(t).
        a_cl: A + exp(-D A) B K.
        lyap: Hermitian P > 0 with a_cl* P + P a_cl = -I, or None for a
            zero-gain (open-loop) design whose a_cl is not Hurwitz.
        desired_poles: placement targets (canonically sorted), or None.
        transition: the feedback ramp.
    """

    delay: float
    n0: int
    a_n0: np.ndarray
    b_n0: np.ndarray
    exp_da: np.ndarray
    gain: np.ndarray
    a_cl: np.ndarray
    lyap: np.ndarray | None
    desired_poles: tuple[complex, ...] | None
    transition: TransitionSignal

    def __post_init__(self):
        if self.delay < 0:
            raise InvalidParameterError("delay must be nonnegative")
        expected = self.a_n0 + self.exp_da @ self.b_n0 @ self.gain
        if float(np.abs(expected - self.a_cl).max()) > 1e-9 * max(
                1.0, float(np.abs(expected).max())):
            raise InvalidParameterError("a_cl does not match A + exp(-DA) B K")
        if self.lyap is not None:
            eye = np.eye(self.n0)
            res = float(np.abs(self.a_cl.conj().T @ self.lyap
                               + self.lyap @ self.a_cl + eye).max())
            if res > 1e-9:
                raise InvalidParameterError(
                    f"Lyapunov residual {res:.3e} exceeds 1e-9")
        if self.desired_poles is not None:
            achieved = _canonical_poles(np.linalg.eigvals(self.a_cl))
            err = max(abs(p - q) for p, q in
                      zip(_canonical_poles(self.desired_poles), achieved))
            if err > 1e-6 * max(1.0, max(abs(p) for p in self.desired_poles)):
                raise InvalidParameterError(
                    "closed-loop spectrum does not match the desired poles")

    @property
    def input_dim(self) -> int:
        return int(self.b_n0.shape[1])

    @property
    def lam_min_p(self) -> float:
        return float(np.linalg.eigvalsh(self.lyap).min())

    @property
    def lam_max_p(self) -> float:
        return float(np.linalg.eigvalsh(self.lyap).max())


def design_predictor(sys: SpectralSystem, n0: int, delay: float,
                     poles: Sequence[complex], t0: float) -> PredictorDesign:
    """Full synthesis: gain placement plus Lyapunov certificate matrix.

    Args:
        sys: the plant.
        n0: retained mode count, 1 <= n0 <= n_max.
        delay: input delay D >= 0.
        poles: n0 desired closed-loop eigenvalues (Hurwitz for a usable
            certificate; placement itself does not require it).
        t0: ramp duration.
    """
    if not 1 <= n0 <= sys.n_max:
        raise InvalidParameterError(
            f"n0 must satisfy 1 <= n0 <= n_max = {sys.n_max}, got {n0}")
    if delay < 0:
        raise InvalidParameterError(f"delay must be nonnegative, got {delay}")
    a_n0 = np.diag(sys.eigenvalues[:n0])
    b_n0 = np.array(sys.input_coeffs[:n0], dtype=complex)
    exp_da = diagonal_exponential(a_n0, -delay)
    gain = place_poles(a_n0, exp_da @ b_n0, poles)
    a_cl = a_n0 + exp_da @ b_n0 @ gain
    lyap = solve_lyapunov(a_cl)
    return PredictorDesign(
        delay=float(delay), n0=n0, a_n0=a_n0, b_n0=b_n0, exp_da=exp_da,
        gain=gain, a_cl=a_cl, lyap=lyap,
        desired_poles=_canonical_poles(poles),
        transition=TransitionSignal(t0=t0),
    )


def zero_gain_design(sys: SpectralSystem, n0: int, delay: float,
                     t0: float) -> PredictorDesign:
    """Open-loop design with K = 0 (no certificate matrix)."""
    if not 1 <= n0 <= sys.n_max:
        raise InvalidParameterError(
            f"n0 must satisfy 1 <= n0 <= n_max = {sys.n_max}, got {n0}")
    a_n0 = np.diag(sys.eigenvalues[:n0])
    b_n0 = np.array(sys.input_coeffs[:n0], dtype=complex)
    return PredictorDesign(
        delay=float(delay), n0=n0, a_n0=a_n0, b_n0=b_n0,
        exp_da=diagonal_exponential(a_n0, -delay),
        gain=np.zeros((sys.input_dim, n0), dtype=complex),
        a_cl=a_n0, lyap=None, desired_poles=None,
        transition=TransitionSignal(t0=t0),
    )


def _window_integral(design: PredictorDesign, history: DelayBuffer,
                     t: float) -> np.ndarray:
    """Trapezoid of exp((t - s - D) A) B u(s) over s in [t - D, t]."""
    s, u = history.window(t - design.delay, t)
    lam = np.diag(design.a_n0)
    kern = np.exp(np.outer(t - design.delay - s, lam))
    g = kern * (u @ design.b_n0.T)
    return np.trapezoid(g, s, axis=0)


def artstein_state(design: PredictorDesign, y: np.ndarray,
                   history: DelayBuffer, t: float) -> np.ndarray:
    """Predictor state Z(t) = Y(t) + window integral of the stored input.

    The history must cover [t - D, t]; inputs before t = 0 count as zero.
    """
    y = np.asarray(y, dtype=complex)
    if y.shape != (design.n0,):
        raise InvalidParameterError(f"y must have shape ({design.n0},)")
    if design.delay == 0.0:
        return y.copy()
    return y + _window_integral(design, history, t)


def control_input(design: PredictorDesign, phi_t: float,
                  z: np.ndarray) -> np.ndarray:
    """Ramped feedback u(t) = phi(t) K Z(t)."""
    if not -1e-12 <= phi_t <= 1.0 + 1e-12:
        raise InvalidParameterError(f"phi must lie in [0, 1], got {phi_t}")
    return phi_t * (design.gain @ np.asarray(z, dtype=complex))


def invert_artstein(design: PredictorDesign, times: np.ndarray, y_path,
                    phi=None, tol: float | None = None,
                    max_iter: int = 200) -> np.ndarray:
    """Recover the input consistent with a modal trajectory.

    Solves the implicit equation v(t) = phi(t) K [Y(t) + int exp((t-s-D)A)
    B v(s) ds] on the sample grid by Picard iteration; the underlying
    operator is a Volterra contraction after finitely many compositions, so
    the iteration always converges for continuous data.

    Args:
        design: the predictor design (supplies A, B, K, D).
        times: uniform, increasing sample grid starting at 0.
        y_path: (len(times), n0) samples or a callable t -> Y(t).
        phi: ramp override; a TransitionSignal or a plain callable t ->
            phi(t).  Defaults to the design's ramp.
        tol: sup-norm increment threshold; defaults to
            1e-10 * (1 + sup |phi K Y|).
        max_iter: Picard iteration budget.

    Returns:
        (len(times), m) input samples.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise InvalidParameterError("times must contain at least two samples")
    dt = times[1] - times[0]
    if dt <= 0 or float(np.abs(np.diff(times) - dt).max()) > 1e-9 * dt:
        raise InvalidParameterError("times must be uniformly increasing")
    if abs(times[0]) > 1e-12:
        raise InvalidParameterError("the sample grid must start at t = 0")
    if callable(y_path):
        y = np.stack([np.asarray(y_path(t), dtype=complex) for t in times])
    else:
        y = np.asarray(y_path, dtype=complex)
    if y.shape != (times.size, design.n0):
        raise InvalidParameterError(
            f"y_path must have shape ({times.size}, {design.n0})")

    if phi is None:
        phi = design.transition
    phi_fn = phi.phi if isinstance(phi, TransitionSignal) else phi
    phi_vals = np.asarray(phi_fn(times), dtype=float)
    if phi_vals.shape == ():
        phi_vals = np.full(times.size, float(phi_vals))

    if max_iter < 1:
        raise InvalidParameterError("max_iter must be at least 1")
    gain = design.gain
    base = phi_vals[:, None] * (y @ gain.T)
    if tol is None:
        tol = 1e-10 * (1.0 + float(np.abs(base).max(initial=0.0)))

    lam = np.diag(design.a_n0)
    d = design.delay
    m = design.input_dim
    if d == 0.0:
        return base

    # precompute the trapezoid quadrature of each sample's window
    # [max(t-D, 0), t] as gathered kernel weights; the structure is
    # iteration independent, so the Picard loop reduces to one einsum
    n = times.size
    n0 = design.n0
    width = int(math.ceil(d / dt - 1e-9)) + 1
    idx = np.zeros((n, width), dtype=np.intp)
    wt = np.zeros((n, width, n0), dtype=complex)
    pidx = np.zeros((n, 2), dtype=np.intp)
    pwt = np.zeros((n, 2, n0), dtype=complex)
    for i, t in enumerate(times):
        lo = max(t - d, 0.0)
        if t - lo <= 1e-15:
            continue
        j_lo = int(math.ceil(lo / dt - 1e-9))
        s_inner = times[j_lo:i + 1]
        k = s_inner.size
        # trapezoid weights on the grid nodes; a window edge strictly
        # between grid points contributes a partial panel [lo, t_{j_lo}]
        # whose edge value is interpolated from the two bracketing samples
        w = np.full(k, dt)
        w[-1] = dt / 2.0
        if s_inner[0] - lo > 1e-9 * dt:
            gap = s_inner[0] - lo
            w[0] = (gap + (dt if k > 1 else 0.0)) / 2.0
            frac = lo / dt - (j_lo - 1)
            kern_lo = np.exp((t - d - lo) * lam) * (gap / 2.0)
            ja = j_lo - 1
            if ja >= 0:
                pidx[i] = (ja, j_lo)
                pwt[i] = np.stack([(1.0 - frac) * kern_lo, frac * kern_lo])
            else:
                pidx[i] = (0, j_lo)
                pwt[i, 1] = frac * kern_lo
        else:
            w[0] = dt / 2.0 if k > 1 else 0.0
        idx[i, :k] = np.arange(j_lo, i + 1)
        wt[i, :k] = np.exp(np.outer(t - d - s_inner, lam)) * w[:, None]

    v = base.copy()
    for _ in range(max_iter):
        g_all = v @ design.b_n0.T
        acc = np.einsum("iwn,iwn->in", wt, g_all[idx])
        acc += np.einsum("ipn,ipn->in", pwt, g_all[pidx])
        v_next = base + phi_vals[:, None] * (acc @ gain.T)
        delta = float(np.abs(v_next - v).max())
        v = v_next
        if delta < tol:
            return v
    raise ConvergenceFailureError(
        f"input inversion did not converge within {max_iter} iterations "
        f"(last increment {delta:.3e}, tol {tol:.3e})")
