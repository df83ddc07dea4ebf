"""Single Kelvin mode ``v = v_hat(t) exp(i k(t).x)`` on a uniform-gradient flow.

The wavevector obeys ``dk/dt = -k.A`` and the amplitude

    dv/dt = -nu |k|^2 v - A v + 2 k (k.A.v) / |k|^2,

where the last term is the pressure gradient, eliminated analytically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flowcore import (
    DomainError,
    ValidationError,
    as_amplitude,
    as_gradient,
    as_wavevector,
)
from .integrators import integrate_adaptive, integrate_rk4, sample_times

TRAJECTORY_COLUMNS = (
    "t", "k1", "k2", "k3",
    "re_v1", "im_v1", "re_v2", "im_v2", "re_v3", "im_v3",
    "energy", "defect", "re_p", "im_p",
)


def rhs_batch(K: np.ndarray, V: np.ndarray, A: np.ndarray, nu: float):
    """Vectorised Kelvin right-hand side.

    Parameters
    ----------
    K : (N, 3) float array
    V : (N, 3) complex array
    A : (3, 3) array shared by all modes, or (N, 3, 3) one per mode
    nu : float

    Returns
    -------
    dK, dV : arrays shaped like ``K`` and ``V``
    """
    k2 = np.sum(K * K, axis=1)
    if np.any(k2 == 0.0):
        raise DomainError("Kelvin dynamics undefined at |k| = 0 (pressure projector singular)")
    if A.ndim == 2:
        KA = K @ A
        AV = V @ A.T
    else:
        KA = np.einsum("nm,nmj->nj", K, A)
        AV = np.einsum("nij,nj->ni", A, V)
    kAv = np.sum(KA * V, axis=1)
    dV = -nu * k2[:, None] * V - AV + 2.0 * K * (kAv / k2)[:, None]
    return -KA, dV


def kelvin_rhs(k, v, A, nu: float):
    """Time derivatives ``(dk/dt, dv/dt)`` of a single Kelvin mode."""
    k = as_wavevector(k)
    v = as_amplitude(v)
    dK, dV = rhs_batch(k[None, :], v[None, :], np.asarray(A, dtype=float), nu)
    return dK[0], dV[0]


def pressure_amplitude(k, v, A) -> complex:
    """Fourier amplitude of the pressure, ``2i (k.A.v) / |k|^2``."""
    k = as_wavevector(k)
    v = as_amplitude(v)
    k2 = k @ k
    if k2 == 0.0:
        raise DomainError("pressure amplitude undefined at |k| = 0")
    return complex(2j * (k @ np.asarray(A, dtype=float) @ v) / k2)


def _pressure_batch(K, V, A):
    k2 = np.sum(K * K, axis=1)
    return 2j * np.sum((K @ A) * V, axis=1) / k2


def mode_energy(v) -> float:
    v = np.asarray(v)
    return float(0.5 * np.real(np.vdot(v, v)))


def incompressibility_defect(k, v) -> float:
    """``|k.v| / (|k||v|)``; zero for a vanishing amplitude."""
    k = np.asarray(k, dtype=float)
    v = np.asarray(v, dtype=complex)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    return float(abs(k @ v) / (np.linalg.norm(k) * nv))


def _defect_batch(K, V):
    nk = np.linalg.norm(K, axis=-1)
    nv = np.linalg.norm(V, axis=-1)
    num = np.abs(np.sum(K * V, axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / (nk * nv)
    return np.where(nv == 0.0, 0.0, out)


@dataclass(frozen=True)
class KelvinMode:
    k: np.ndarray
    v: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        k = as_wavevector(self.k)
        v = as_amplitude(self.v)
        if np.linalg.norm(k) == 0.0:
            raise ValidationError("mode wavevector must be nonzero")
        d = incompressibility_defect(k, v)
        if d > self.tol:
            raise ValidationError(f"mode is not incompressible: |k.v|/(|k||v|) = {d:.3e}")
        k.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)

    @classmethod
    def solenoidal(cls, k, w) -> KelvinMode:
        """Mode with amplitude ``w`` projected onto the plane normal to ``k``."""
        from .flowcore import incompressible_projection

        return cls(k, incompressible_projection(k, np.asarray(w, dtype=complex)))

    @property
    def energy(self) -> float:
        return mode_energy(self.v)

    @property
    def defect(self) -> float:
        return incompressibility_defect(self.k, self.v)


@dataclass(frozen=True)
class SimulationConfig:
    """Integration settings.

    ``sample_every`` is the output cadence in RK4 steps; the adaptive method
    reports on the same time grid. ``reproject`` re-imposes ``k.v = 0`` after
    every RK4 step (off by default so that drift stays observable).
    """

    nu: float = 0.0
    dt: float = 1e-3
    t_end: float = 1.0
    method: str = "rk4"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    sample_every: int = 1
    reproject: bool = False

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValidationError(f"unknown method {self.method!r}; use 'rk4' or 'rk45'")
        if not self.nu >= 0.0:
            raise ValidationError("nu must be >= 0")
        if not (self.dt > 0.0 and self.t_end > 0.0):
            raise ValidationError("dt and t_end must be positive")
        if self.dt > self.t_end:
            raise ValidationError("dt must not exceed t_end")
        if not (self.abs_tol > 0.0 and self.rel_tol > 0.0):
            raise ValidationError("tolerances must be positive")
        if self.sample_every < 1:
            raise ValidationError("sample_every must be >= 1")


@dataclass(frozen=True)
class ModeTrajectory:
    t: np.ndarray
    k: np.ndarray
    v: np.ndarray
    A: np.ndarray = field(repr=False)

    @property
    def energy(self) -> np.ndarray:
        return 0.5 * np.sum(np.abs(self.v) ** 2, axis=1)

    @property
    def defect(self) -> np.ndarray:
        return _defect_batch(self.k, self.v)

    @property
    def k_norm(self) -> np.ndarray:
        return np.linalg.norm(self.k, axis=1)

    @property
    def v_norm(self) -> np.ndarray:
        return np.linalg.norm(self.v, axis=1)

    @property
    def pressure(self) -> np.ndarray:
        return _pressure_batch(self.k, self.v, self.A)

    def rows(self):
        e, d, p = self.energy, self.defect, self.pressure
        for i in range(self.t.size):
            v = self.v[i]
            yield (
                self.t[i], *self.k[i],
                v[0].real, v[0].imag, v[1].real, v[1].imag, v[2].real, v[2].imag,
                e[i], d[i], p[i].real, p[i].imag,
            )

    def to_csv(self, path) -> None:
        write_csv(path, TRAJECTORY_COLUMNS, self.rows())


def write_csv(path, header, rows) -> None:
    """Write rows of floats using shortest round-trip formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else repr(float(x)) for x in row])


def _project_batch(K, V):
    k2 = np.sum(K * K, axis=1)
    return V - K * (np.sum(K * V, axis=1) / k2)[:, None]


def integrate_states(K0, V0, rhs, cfg: SimulationConfig):
    """Integrate a batch of modes under ``rhs(K, V) -> (dK, dV)``.

    Shared by single-mode and ensemble evolution so that equivalent runs are
    bit-identical. Returns ``(times, K(t), V(t))`` with leading sample axis.
    """
    def f(t, y):
        return rhs(y[0], y[1])

    y0 = (np.array(K0, dtype=float), np.array(V0, dtype=complex))
    if cfg.method == "rk4":
        post = (lambda y: (y[0], _project_batch(y[0], y[1]))) if cfg.reproject else None
        times, states = integrate_rk4(f, y0, cfg.t_end, cfg.dt, cfg.sample_every, post)
    else:
        t_eval = sample_times(cfg.t_end, cfg.dt, cfg.sample_every)
        times, states = integrate_adaptive(f, y0, t_eval, cfg.rel_tol, cfg.abs_tol,
                                           first_step=min(cfg.dt, cfg.t_end))
    return times, np.stack([s[0] for s in states]), np.stack([s[1] for s in states])


def integrate_mode(mode: KelvinMode, A, cfg: SimulationConfig) -> ModeTrajectory:
    """Evolve a single Kelvin mode on the constant gradient ``A``."""
    A = as_gradient(A)
    nu = cfg.nu
    times, K, V = integrate_states(
        mode.k[None, :], mode.v[None, :], lambda K, V: rhs_batch(K, V, A, nu), cfg
    )
    return ModeTrajectory(t=times, k=K[:, 0, :], v=V[:, 0, :], A=A)


def fourier_rhs(k, v, grad_v, A, nu: float) -> np.ndarray:
    """Eulerian ``dv_hat/dt`` at fixed ``k`` from the Fourier-transformed equation.

    ``grad_v[l, n] = d v_l / d k_n``. Along a characteristic ``dk/dt = -k.A``
    the advection term cancels and :func:`kelvin_rhs` is recovered.
    """
    k = np.asarray(k, dtype=float)
    A = np.asarray(A, dtype=float)
    k2 = k @ k
    kA = k @ A
    return grad_v @ kA - nu * k2 * v - A @ v + 2.0 * k * (kA @ v) / k2
