"""Brute-force checks of the spectral identities behind the quasi-linear model.

* the mean-flow-generating convolution at ``k = 0`` vanishes for
  incompressible fields;
* the nonlocal approximation ``int k'_n u_m(k') u_n(k - k') dk'
  ~ u_n(k) int k'_n u_m(k') dk'`` over a small ball, measured by quadrature;
* the Fourier-space linear equation is satisfied by fields built from Kelvin
  characteristics, checked by finite differences in ``k`` and ``t``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import roots_legendre

from .ds import ModeEnsemble, partner_amplitudes
from .flowcore import DomainError, UsageError, as_gradient, as_wavevector, incompressible_projection
from .kelvin import SimulationConfig, fourier_rhs, integrate_states, rhs_batch


class StencilError(DomainError):
    """The finite-difference stencil in ``k`` is degenerate."""


# ---------------------------------------------------------------- zero mode

def zero_mode_terms(ensemble: ModeEnsemble) -> np.ndarray:
    """Terms ``(k . v(-k)) v(k)`` for every wavevector of the full +/- set."""
    K, V = ensemble.full_set()
    n = len(ensemble)
    Vneg = np.vstack([V[n:], V[:n]])
    return np.sum(K * Vneg, axis=1)[:, None] * V


def convolution_at_zero(ensemble: ModeEnsemble) -> np.ndarray:
    """Discrete ``sum_k' k'_n u_m(k') u_n(-k')`` over stored modes and partners."""
    if len(ensemble) == 0:
        return np.zeros(3, dtype=complex)
    return np.sum(zero_mode_terms(ensemble), axis=0)


def zero_mode_scale(ensemble: ModeEnsemble) -> float:
    """``sum |k| |v|^2`` over the full set, the natural size of each term."""
    K, V = ensemble.full_set()
    return float(np.sum(np.linalg.norm(K, axis=1) * np.sum(np.abs(V) ** 2, axis=1)))


def random_incompressible_ensemble(n_pairs: int, rng: np.random.Generator, point_symmetric: bool = True) -> ModeEnsemble:
    """``n_pairs`` random solenoidal modes with wavevectors in ``[-4, 4]^3``."""
    K = rng.uniform(-4.0, 4.0, size=(n_pairs, 3))
    W = rng.normal(size=(n_pairs, 3))
    if point_symmetric:
        W = 1j * W
    else:
        W = W + 1j * rng.normal(size=(n_pairs, 3))
    V = np.array([incompressible_projection(k, w) for k, w in zip(K, W)])
    if point_symmetric:
        V = 1j * V.imag
    return ModeEnsemble(K, V, point_symmetric)


# ------------------------------------------------- nonlocal approximation

@dataclass(frozen=True)
class ConvolutionReport:
    exact_term: np.ndarray
    approx_term: np.ndarray
    relative_error: float
    separation_ratio: float
    quadrature_n: int
    quadrature_warning: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("exact_term", "approx_term"):
            d[key] = {"re": np.real(d[key]).tolist(), "im": np.imag(d[key]).tolist()}
        return d


def gaussian_test_field(k: np.ndarray, w: np.ndarray, width: float) -> np.ndarray:
    """Odd, incompressible, pure-imaginary field ``i (k.w/s) exp(-|k|^2/2s^2) P(k) w``.

    ``k`` has shape ``(..., 3)``; the projector is taken as zero at ``k = 0``.
    """
    k2 = np.sum(k * k, axis=-1, keepdims=True)
    kw = k @ w
    safe = np.where(k2 == 0.0, 1.0, k2)
    Pw = w - k * (kw[..., None] / safe)
    env = (kw / width) * np.exp(-0.5 * k2[..., 0] / width**2)
    return 1j * env[..., None] * Pw


def ball_quadrature(radius: float, n: int, rotation: np.ndarray | None = None):
    """Tensor-product Gauss-Legendre rule on a ball in spherical coordinates.

    Returns nodes ``(n^3, 3)`` and weights ``(n^3,)`` (Jacobian included).
    """
    x, wx = roots_legendre(n)
    r = 0.5 * radius * (x + 1.0)
    wr = 0.5 * radius * wx * r**2
    mu, wmu = x, wx
    phi = np.pi * (x + 1.0)
    wphi = np.pi * wx
    R, MU, PHI = np.meshgrid(r, mu, phi, indexing="ij")
    S = np.sqrt(1.0 - MU**2)
    nodes = np.stack([R * S * np.cos(PHI), R * S * np.sin(PHI), R * MU], axis=-1).reshape(-1, 3)
    weights = (wr[:, None, None] * wmu[None, :, None] * wphi[None, None, :]).ravel()
    if rotation is not None:
        nodes = nodes @ np.asarray(rotation, dtype=float).T
    return nodes, weights


def _convolution_terms(k_target, w, width, radius, n, rotation):
    nodes, weights = ball_quadrature(radius, n, rotation)
    u_near = gaussian_test_field(nodes, w, width)               # u(k')
    u_far = gaussian_test_field(k_target[None, :] - nodes, w, width)  # u(k - k')
    u_k = gaussian_test_field(k_target, w, width)
    # exact_m = sum_q w_q k'_n u_m(k') u_n(k - k')
    exact = np.einsum("q,q,qm->m", weights, np.sum(nodes * u_far, axis=1), u_near)
    # approx_m = u_n(k) sum_q w_q k'_n u_m(k')
    moment = np.einsum("q,qn,qm->nm", weights, nodes, u_near)
    approx = u_k @ moment
    return exact, approx


def _relative(exact, approx) -> float:
    ne = np.linalg.norm(exact)
    diff = np.linalg.norm(exact - approx)
    if ne == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / ne)


def nonlocal_approx_error(
    k_target,
    envelope_width: float,
    ball_radius: float,
    quadrature_n: int,
    field_vector=(0.0, 0.0, 1.0),
    rotation=None,
) -> ConvolutionReport:
    """Relative error of the nonlocal convolution approximation over a ball.

    Both sides are integrated on the same rule, so the reported error is the
    quadrature of ``k'_n u_m(k') [u_n(k - k') - u_n(k)]`` relative to the
    exact side. A rule with ``2 quadrature_n`` nodes per axis is also
    evaluated; ``quadrature_warning`` is set if any of the two terms or their
    difference moves by more than 10 %.
    """
    k_target = as_wavevector(k_target)
    w = np.asarray(field_vector, dtype=float)
    kn = np.linalg.norm(k_target)
    if not 0.0 < ball_radius < kn:
        raise UsageError("ball radius must satisfy 0 < radius < |k_target|")
    if quadrature_n < 8:
        raise UsageError("quadrature_n must be >= 8")
    if rotation is not None:
        Q = np.asarray(rotation, dtype=float)
        k_target, w = Q @ k_target, Q @ w
    exact, approx = _convolution_terms(k_target, w, envelope_width, ball_radius, quadrature_n, rotation)
    exact2, approx2 = _convolution_terms(k_target, w, envelope_width, ball_radius, 2 * quadrature_n, rotation)
    warn = False
    for a, b in ((exact, exact2), (approx, approx2), (exact - approx, exact2 - approx2)):
        if np.linalg.norm(a - b) > 0.1 * np.linalg.norm(b):
            warn = True
    return ConvolutionReport(
        exact_term=exact,
        approx_term=approx,
        relative_error=_relative(exact, approx),
        separation_ratio=float(ball_radius / kn),
        quadrature_n=int(quadrature_n),
        quadrature_warning=warn,
    )


# ------------------------------------------------------- PDE residual

@dataclass(frozen=True)
class ResidualReport:
    stencil_delta: float
    time: float
    residual_norm: float
    reference_norm: float
    time_shift: float
    note: str = "valid for constant A only: uses the exact linear wavevector map"

    def to_dict(self) -> dict:
        return asdict(self)


def pde_residual_check(
    A,
    k0,
    delta: float,
    t: float,
    nu: float,
    cfg: SimulationConfig | None = None,
    w=(0.3j, -0.5j, 0.8j),
) -> ResidualReport:
    """Residual of the Fourier-space linear equation for a characteristic-built field.

    The field is ``v(k, 0) = P(k) w``. Seven characteristics start at ``k0``
    and ``k0 +/- delta e_n``; at time ``t`` the centred differences along the
    mapped stencil directions ``M e_n`` (``M = expm(-A^T t)``) give ``D = J M``
    and the ``k``-gradient ``J`` follows from a 3x3 solve. The Eulerian time
    derivative at ``k* = M k0`` comes from two further characteristics that
    reach ``k*`` at ``t +/- tau`` with ``tau = delta / |k0|``.
    """
    A = as_gradient(A)
    k0 = as_wavevector(k0)
    w = np.asarray(w, dtype=complex)
    if cfg is None:
        cfg = SimulationConfig(nu=nu, dt=1e-3, t_end=t)
    kn = np.linalg.norm(k0)
    if not 0.0 < delta < 0.5 * kn:
        raise UsageError("stencil delta must satisfy 0 < delta < |k0|/2")
    tau = delta / kn
    if tau >= t:
        raise UsageError("time must exceed the time shift delta/|k0|")
    M = expm(-A.T * t)
    if np.linalg.cond(M) > 1e12:
        raise StencilError("wavevector map is numerically singular; stencil degenerate")

    def run(K0, t_end):
        c = SimulationConfig(nu=nu, dt=min(cfg.dt, t_end), t_end=t_end, method=cfg.method,
                             abs_tol=cfg.abs_tol, rel_tol=cfg.rel_tol,
                             sample_every=10**9)
        V0 = np.array([incompressible_projection(k, w) for k in K0])
        _, K, V = integrate_states(K0, V0, lambda K, V: rhs_batch(K, V, A, nu), c)
        return K[-1], V[-1]

    E = np.eye(3)
    K0 = np.vstack([k0[None, :], k0 + delta * E, k0 - delta * E])
    K, V = run(K0, t)
    k_star, v_star = K[0], V[0]
    D = (V[1:4] - V[4:7]).T / (2.0 * delta)  # D[l, n]
    J = np.linalg.solve(M.T, D.T).T

    k_plus = expm(tau * A.T) @ k0
    k_minus = expm(-tau * A.T) @ k0
    _, v_plus = run(k_plus[None, :], t + tau)
    _, v_minus = run(k_minus[None, :], t - tau)
    dvdt = (v_plus[0] - v_minus[0]) / (2.0 * tau)

    residual = dvdt - fourier_rhs(k_star, v_star, J, A, nu)
    k2 = k_star @ k_star
    kA = k_star @ A
    reference = (
        np.linalg.norm(dvdt) + np.linalg.norm(J @ kA) + nu * k2 * np.linalg.norm(v_star)
        + np.linalg.norm(A @ v_star) + 2.0 * abs(kA @ v_star) / np.sqrt(k2)
    )
    return ResidualReport(
        stencil_delta=float(delta),
        time=float(t),
        residual_norm=float(np.linalg.norm(residual)),
        reference_norm=float(reference),
        time_shift=float(tau),
    )


def convergence_order(deltas, residuals) -> float:
    """Least-squares slope of ``log residual`` against ``log delta``."""
    return float(np.polyfit(np.log(deltas), np.log(residuals), 1)[0])
