"""Floquet analysis of Kelvin modes on closed-streamline base flows.

For constant ``A`` the wavevector map is ``k(t) = expm(-A^T t) k0``. When
``-A^T`` has eigenvalues ``{+iw, -iw, 0}`` every ``k(t)`` with a component in
the oscillating eigenplane has period ``2 pi / w``, and the amplitude
equation is a linear ODE with periodic coefficients. Its monodromy matrix
decides parametric growth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flowcore import DomainError, IntegrationError, UsageError, as_gradient, as_wavevector
from .integrators import rk4_step
from .kelvin import write_csv

MIN_STEPS_PER_PERIOD = 32


def _oscillation_frequency(A: np.ndarray, tol: float = 1e-10):
    """Return ``(omega, eigvals, eigvecs)`` of ``-A^T`` or ``None`` if not oscillatory."""
    M = -A.T
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    lam, vecs = np.linalg.eig(M)
    if np.max(np.abs(lam.real)) > tol * scale:
        return None
    omega = float(np.max(np.abs(lam.imag)))
    if omega <= tol * scale:
        return None
    return omega, lam, vecs


def wavevector_period(A, k0) -> float | None:
    """Period of ``k(t)`` for constant ``A``, or ``None`` when ``k(t)`` is not oscillatory.

    ``None`` covers real spectra (strain, shear) and initial wavevectors lying
    entirely on the neutral (zero-eigenvalue) direction.
    """
    A = np.asarray(A, dtype=float)
    k0 = as_wavevector(k0)
    osc = _oscillation_frequency(A)
    if osc is None:
        return None
    omega, lam, vecs = osc
    coeffs = np.linalg.solve(vecs, k0.astype(complex))
    in_plane = np.abs(lam.imag) > 0.5 * omega
    if np.linalg.norm(coeffs[in_plane] * np.linalg.norm(vecs[:, in_plane], axis=0)) <= 1e-12 * np.linalg.norm(k0):
        return None
    return 2.0 * np.pi / omega


@dataclass(frozen=True)
class MonodromyResult:
    period: float
    monodromy: np.ndarray
    multipliers: np.ndarray
    growth_rate: float


def _monodromy_rhs(A: np.ndarray, nu: float):
    def f(t, y):
        K, Phi = y
        k2 = np.sum(K * K, axis=1)
        KA = K @ A
        # M(t) Phi with M = -nu|k|^2 I - A + 2 k (k A) / |k|^2
        dPhi = (
            -nu * k2[:, None, None] * Phi
            - np.einsum("ij,njc->nic", A, Phi)
            + 2.0 * K[:, :, None] * (np.einsum("nj,njc->nc", KA, Phi) / k2[:, None])[:, None, :]
        )
        return -K @ A, dPhi

    return f


def _batched_monodromy(A: np.ndarray, K0: np.ndarray, nu: float, period: float, steps: int):
    f = _monodromy_rhs(A, nu)
    n = K0.shape[0]
    y = (np.array(K0, dtype=float), np.broadcast_to(np.eye(3), (n, 3, 3)).copy())
    h = period / steps
    for i in range(steps):
        y = rk4_step(f, i * h, y, h)
    return y[1]


def _growth(multipliers: np.ndarray, period: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.max(np.log(np.abs(multipliers)), axis=-1) / period


def monodromy(A, k0, nu: float = 0.0, steps_per_period: int = 512) -> MonodromyResult:
    """Fundamental matrix of the amplitude equation over one period of ``k(t)``.

    Raises
    ------
    DomainError
        If ``k(t)`` is not periodic for this ``A`` and ``k0``.
    """
    A = as_gradient(A)
    k0 = as_wavevector(k0)
    if steps_per_period < MIN_STEPS_PER_PERIOD:
        raise UsageError(f"steps_per_period must be >= {MIN_STEPS_PER_PERIOD}")
    T = wavevector_period(A, k0)
    if T is None:
        raise DomainError("base flow / wavevector combination is aperiodic; no monodromy")
    Phi = _batched_monodromy(A, k0[None, :], nu, T, steps_per_period)[0]
    if not np.all(np.isfinite(Phi)):
        raise IntegrationError("monodromy integration overflowed", time=T)
    lam = np.linalg.eigvals(Phi)
    return MonodromyResult(
        period=T,
        monodromy=Phi.astype(complex),
        multipliers=lam,
        growth_rate=float(_growth(lam, T)),
    )


def direction(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


@dataclass(frozen=True)
class OrientationScan:
    """Growth rate on a cell-centred polar grid and uniform azimuthal grid.

    ``growth_rate[i, j]`` belongs to ``(theta[i], phi[j])``; NaN marks grid
    points where no monodromy could be formed.
    """

    theta: np.ndarray
    phi: np.ndarray
    growth_rate: np.ndarray
    A: np.ndarray
    nu: float
    k_magnitude: float
    steps_per_period: int

    @property
    def max_growth(self) -> float:
        return float(np.nanmax(self.growth_rate))

    @property
    def argmax_direction(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.nanargmax(self.growth_rate), self.growth_rate.shape)
        return float(self.theta[i]), float(self.phi[j])

    def rows(self):
        for i, th in enumerate(self.theta):
            for j, ph in enumerate(self.phi):
                yield th, ph, self.growth_rate[i, j]

    def to_csv(self, path) -> None:
        write_csv(path, ("theta", "phi", "growth_rate"), self.rows())

    def summary(self) -> dict:
        th, ph = self.argmax_direction
        return {
            "max_growth": self.max_growth,
            "argmax_direction": {"theta": th, "phi": ph, "k0": (self.k_magnitude * direction(th, ph)).tolist()},
            "parameters": {
                "A": self.A.tolist(),
                "nu": self.nu,
                "n_theta": int(self.theta.size),
                "n_phi": int(self.phi.size),
                "k_magnitude": self.k_magnitude,
                "steps_per_period": self.steps_per_period,
            },
        }

    def write_summary(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def orientation_scan(
    A,
    nu: float,
    n_theta: int,
    n_phi: int,
    k_magnitude: float = 1.0,
    steps_per_period: int = 512,
) -> OrientationScan:
    """Maximum Floquet growth rate over initial wavevector directions.

    Polar angles are cell-centred, ``theta_i = (i + 1/2) pi / n_theta``, so the
    neutral axis of planar flows is never sampled; azimuths are
    ``phi_j = 2 pi j / n_phi``. All periodic grid points share one period
    and are integrated together.
    """
    A = as_gradient(A)
    if n_theta < 2 or n_phi < 2:
        raise UsageError("orientation grid needs at least 2 points per axis")
    theta = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    if _oscillation_frequency(A) is None:
        raise DomainError("orientation scan needs a closed-streamline base flow")
    growth = np.full((n_theta, n_phi), np.nan)
    K0, index, T = [], [], None
    for i, th in enumerate(theta):
        for j, ph in enumerate(phi):
            k0 = k_magnitude * direction(th, ph)
            Tij = wavevector_period(A, k0)
            if Tij is None:
                continue
            T = Tij
            K0.append(k0)
            index.append((i, j))
    if K0:
        Phi = _batched_monodromy(A, np.array(K0), nu, T, steps_per_period)
        with np.errstate(invalid="ignore"):
            finite = np.all(np.isfinite(Phi), axis=(1, 2))
        lam = np.full((len(K0), 3), np.nan, dtype=complex)
        if np.any(finite):
            lam[finite] = np.linalg.eigvals(Phi[finite])
        rates = _growth(lam, T)
        for (i, j), r, ok in zip(index, rates, finite):
            growth[i, j] = r if ok else np.nan
    return OrientationScan(theta, phi, growth, A, float(nu), float(k_magnitude), int(steps_per_period))
