"""Quasi-linear (DS) model as a Lagrangian ensemble of Kelvin modes.

Each stored mode ``(k, v)`` stands for a pair: its partner is ``(-k, -v)``
for point-symmetric ensembles (pure imaginary amplitudes) and
``(-k, conj(v))`` otherwise (real velocity field). The gradient distorting
the modes is built from the modes themselves,

    A_mn = sum over the full +/- set of  i k_n v_m(k),

which is the DS definition translated to the ``A_mn = dU_m/dx_n``
convention used throughout this package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

from .flowcore import (
    ConsistencyError,
    UsageError,
    ValidationError,
    as_gradient,
    base_flow_matrix,
    BaseFlowSpec,
)
from .kelvin import (
    KelvinMode,
    SimulationConfig,
    _defect_batch,
    integrate_states,
    rhs_batch,
    write_csv,
)

IMAG_TOL = 1e-12


@dataclass(frozen=True)
class External:
    """Prescribed constant gradient; the ensemble is ignored."""

    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", as_gradient(self.A))

    def __str__(self) -> str:
        return "external"


@dataclass(frozen=True)
class DSFullSum:
    """Gradient summed over every mode of the ensemble."""

    def __str__(self) -> str:
        return "ds"


@dataclass(frozen=True)
class BallRestricted:
    """Gradient for target ``k*`` summed over modes with ``|k| <= rho |k*|``."""

    rho: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValidationError("ball radius ratio rho must lie strictly in (0, 1)")

    def __str__(self) -> str:
        return f"ball:{self.rho!r}"


ClosureSpec = Union[External, DSFullSum, BallRestricted]


def parse_closure(text: str, base: BaseFlowSpec | None = None) -> ClosureSpec:
    """``ds``, ``ball[:rho]`` or ``external`` (gradient taken from ``base``)."""
    name, _, arg = text.strip().lower().partition(":")
    if name in ("ds", "full", "dsfullsum"):
        return DSFullSum()
    if name in ("ball", "ballrestricted"):
        return BallRestricted(float(arg)) if arg else BallRestricted()
    if name == "external":
        if base is None:
            raise UsageError("external closure needs a base flow")
        return External(base_flow_matrix(base))
    raise UsageError(f"unknown closure {text!r}")


@dataclass(frozen=True)
class ModeEnsemble:
    """Half-set of Kelvin modes, one representative per +/- pair.

    Parameters
    ----------
    k : (N, 3) float array
    v : (N, 3) complex array
    point_symmetric : bool
        If set, amplitudes must be pure imaginary and partners are ``(-k, -v)``.
    check : bool
        Validate pair uniqueness, incompressibility and point symmetry.
        Audits of deliberately broken fields pass ``check=False``.
    """

    k: np.ndarray
    v: np.ndarray
    point_symmetric: bool = True
    check: bool = True

    def __post_init__(self):
        k = np.array(self.k, dtype=float).reshape(-1, 3)
        v = np.array(self.v, dtype=complex).reshape(-1, 3)
        if k.shape != v.shape:
            raise ValidationError("k and v must list the same number of modes")
        if self.check:
            _validate(k, v, self.point_symmetric)
        k.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)

    def __len__(self) -> int:
        return self.k.shape[0]

    @classmethod
    def from_modes(cls, modes, point_symmetric: bool = True) -> ModeEnsemble:
        modes = list(modes)
        if not modes:
            return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=complex), point_symmetric)
        return cls(np.array([m.k for m in modes]), np.array([m.v for m in modes]), point_symmetric)

    @property
    def modes(self) -> list[KelvinMode]:
        return [KelvinMode(k, v, tol=1e-10) for k, v in zip(self.k, self.v)]

    def full_set(self) -> tuple[np.ndarray, np.ndarray]:
        """All ``2N`` wavevectors and amplitudes, stored modes first."""
        return np.vstack([self.k, -self.k]), np.vstack([self.v, partner_amplitudes(self.v, self.point_symmetric)])

    @classmethod
    def from_dict(cls, doc: dict) -> ModeEnsemble:
        try:
            ps = bool(doc.get("point_symmetric", True))
            ks, vs = [], []
            for i, m in enumerate(doc["modes"]):
                im = np.asarray(m.get("v_im", [0.0, 0.0, 0.0]), dtype=float)
                re = np.asarray(m.get("v_re", [0.0, 0.0, 0.0]), dtype=float)
                if ps and np.any(re != 0.0):
                    raise ValidationError(f"mode {i}: point-symmetric ensembles take v_im only")
                ks.append(np.asarray(m["k"], dtype=float))
                vs.append(re + 1j * im)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed ensemble document: {exc}") from exc
        if not ks:
            return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=complex), ps)
        return cls(np.array(ks), np.array(vs), ps)

    @classmethod
    def from_json(cls, path) -> ModeEnsemble:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        modes = []
        for k, v in zip(self.k, self.v):
            m = {"k": k.tolist(), "v_im": v.imag.tolist()}
            if not self.point_symmetric:
                m["v_re"] = v.real.tolist()
            modes.append(m)
        return {"point_symmetric": self.point_symmetric, "modes": modes}


def _validate(k: np.ndarray, v: np.ndarray, point_symmetric: bool) -> None:
    norms = np.linalg.norm(k, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError("ensemble wavevectors must be nonzero")
    for i in range(len(k)):
        for j in range(i):
            if np.array_equal(k[i], k[j]) or np.array_equal(k[i], -k[j]):
                raise ValidationError(f"modes {j} and {i} have equal or opposite wavevectors")
    d = _defect_batch(k, v)
    if d.size and d.max() > 1e-10:
        raise ValidationError(f"mode {int(np.argmax(d))} is not incompressible (defect {d.max():.3e})")
    if point_symmetric:
        mag = np.linalg.norm(v, axis=1)
        bad = np.max(np.abs(v.real), axis=1, initial=0.0) > IMAG_TOL * mag
        if np.any(bad):
            raise ValidationError(f"mode {int(np.argmax(bad))} is not pure imaginary but ensemble is point-symmetric")


def partner_amplitudes(V: np.ndarray, point_symmetric: bool) -> np.ndarray:
    return -V if point_symmetric else np.conj(V)


def pair_contributions(K: np.ndarray, V: np.ndarray, point_symmetric: bool) -> np.ndarray:
    """Per-pair gradient contributions, shape ``(N, 3, 3)`` complex.

    ``C[j, m, n] = i k_n (v_m - v'_m)`` where ``v'`` is the partner amplitude.
    """
    dv = V - partner_amplitudes(V, point_symmetric)
    return 1j * dv[:, :, None] * K[:, None, :]


def _real_gradient(S: np.ndarray, scale: float) -> np.ndarray:
    if np.max(np.abs(S.imag), initial=0.0) > IMAG_TOL * max(scale, np.finfo(float).tiny):
        raise ConsistencyError(
            f"self-consistent gradient has imaginary part {np.max(np.abs(S.imag)):.3e}; "
            "amplitudes violate the declared symmetry"
        )
    return np.ascontiguousarray(S.real)


def _gradients(K, V, point_symmetric, closure):
    """Gradient(s) for the current state: (3, 3) shared or (N, 3, 3) per mode."""
    if isinstance(closure, External):
        return closure.A
    C = pair_contributions(K, V, point_symmetric)
    scale = float(np.sum(np.abs(C)))
    if isinstance(closure, DSFullSum):
        return _real_gradient(np.sum(C, axis=0) if len(K) else np.zeros((3, 3), complex), scale)
    norms = np.linalg.norm(K, axis=1)
    mask = (norms[None, :] <= closure.rho * norms[:, None]).astype(float)
    return _real_gradient(np.einsum("ji,imn->jmn", mask, C), scale)


def self_consistent_gradient(ensemble: ModeEnsemble, closure: ClosureSpec, target=None) -> np.ndarray:
    """Gradient that distorts ``target`` (or every mode) under ``closure``.

    Raises
    ------
    UsageError
        ``BallRestricted`` without a target wavevector.
    ConsistencyError
        The pair sum has an imaginary part, i.e. amplitudes break the
        declared symmetry.
    """
    if isinstance(closure, External):
        return closure.A
    C = pair_contributions(ensemble.k, ensemble.v, ensemble.point_symmetric)
    scale = float(np.sum(np.abs(C)))
    if isinstance(closure, DSFullSum):
        S = np.sum(C, axis=0) if len(ensemble) else np.zeros((3, 3), complex)
        return _real_gradient(S, scale)
    if target is None:
        raise UsageError("BallRestricted closure needs a target wavevector")
    radius = closure.rho * np.linalg.norm(np.asarray(target, dtype=float))
    inside = np.linalg.norm(ensemble.k, axis=1) <= radius
    S = np.sum(C[inside], axis=0) if np.any(inside) else np.zeros((3, 3), complex)
    return _real_gradient(S, scale)


def convention_map_gradient(A) -> np.ndarray:
    """Map a gradient between this package's and the DS convention (``-A^T``)."""
    return -np.asarray(A).T


def convention_map_amplitude(v) -> np.ndarray:
    """DS amplitude from ours: ``-i v``."""
    return -1j * np.asarray(v)


def fourier_rhs_ds(k, w, grad_w, B, nu: float) -> np.ndarray:
    """Eulerian ``dw/dt`` of the linear Fourier-space equation written in DS variables.

    ``w`` is the DS amplitude, ``B`` the DS gradient and
    ``grad_w[l, n] = dw_l/dk_n``.
    """
    k = np.asarray(k, dtype=float)
    k2 = k @ k
    kB = B @ k  # k_m B_nm
    return -grad_w @ kB - nu * k2 * w + B.T @ w - 2.0 * k * (kB @ w) / k2


def ds_rhs(ensemble: ModeEnsemble, nu: float, closure: ClosureSpec):
    """Per-mode ``(dk/dt, dv/dt)`` with the closure gradient recomputed from the state."""
    A = _gradients(ensemble.k, ensemble.v, ensemble.point_symmetric, closure)
    return rhs_batch(ensemble.k, ensemble.v, A, nu)


@dataclass(frozen=True)
class EnsembleTrajectory:
    """Sampled ensemble evolution.

    ``A`` has shape ``(n_t, 3, 3)`` for shared gradients and ``(n_t, N, 3, 3)``
    for ``BallRestricted``.
    """

    t: np.ndarray
    k: np.ndarray
    v: np.ndarray
    A: np.ndarray
    closure: ClosureSpec
    point_symmetric: bool

    @property
    def per_mode_gradient(self) -> np.ndarray:
        if self.A.ndim == 4:
            return self.A
        return np.broadcast_to(self.A[:, None], (self.t.size, self.k.shape[1], 3, 3))

    @property
    def total_energy(self) -> np.ndarray:
        """Energy of the full +/- set (each stored mode counted twice, halved)."""
        return np.sum(np.abs(self.v) ** 2, axis=(1, 2))

    @property
    def max_defect(self) -> np.ndarray:
        if self.k.shape[1] == 0:
            return np.zeros(self.t.size)
        return np.max(_defect_batch(self.k, self.v), axis=1)

    @property
    def trace(self) -> np.ndarray:
        tr = np.trace(self.per_mode_gradient, axis1=-2, axis2=-1)
        if tr.ndim == 1:
            return tr
        return tr[np.arange(tr.shape[0]), np.argmax(np.abs(tr), axis=1)] if tr.shape[1] else np.zeros(self.t.size)

    @property
    def max_real_part(self) -> np.ndarray:
        return np.max(np.abs(self.v.real), axis=(1, 2), initial=0.0)

    def admissibility_defect(self) -> np.ndarray:
        """``||S - S^T||`` for ``S = dA/dt + A A`` with ``dA/dt`` finite-differenced.

        Per-mode gradients report the worst mode.
        """
        G = self.per_mode_gradient
        if G.shape[1] == 0 or self.t.size < 2:
            return np.zeros(self.t.size)
        dG = np.gradient(G, self.t, axis=0)
        S = dG + G @ G
        d = np.linalg.norm(S - np.swapaxes(S, -1, -2), axis=(-2, -1))
        return np.max(d, axis=1)

    def to_csv(self, directory) -> list[Path]:
        directory = Path(directory)
        G = self.per_mode_gradient
        files = []
        header = ("t", "k1", "k2", "k3", "re_v1", "im_v1", "re_v2", "im_v2", "re_v3", "im_v3",
                  "energy", "defect") + tuple(f"A{m}{n}" for m in "123" for n in "123")
        for j in range(self.k.shape[1]):
            K, V = self.k[:, j], self.v[:, j]
            e = 0.5 * np.sum(np.abs(V) ** 2, axis=1)
            d = _defect_batch(K, V)
            rows = (
                (self.t[i], *K[i], *(x for c in V[i] for x in (c.real, c.imag)), e[i], d[i], *G[i, j].ravel())
                for i in range(self.t.size)
            )
            path = directory / f"mode_{j:03d}.csv"
            write_csv(path, header, rows)
            files.append(path)
        shared = self.A if self.A.ndim == 3 else np.full((self.t.size, 3, 3), np.nan)
        mon = (self.total_energy, self.max_defect, self.trace, self.admissibility_defect())
        rows = (
            (self.t[i], *shared[i].ravel(), *(m[i] for m in mon)) for i in range(self.t.size)
        )
        path = directory / "gradient.csv"
        write_csv(path, ("t",) + header[12:] + ("total_energy", "max_defect", "trace", "admissibility_defect"), rows)
        files.append(path)
        return files


def evolve_ensemble(ensemble: ModeEnsemble, nu: float, closure: ClosureSpec, cfg: SimulationConfig) -> EnsembleTrajectory:
    """Integrate the quasi-linear system, recomputing the gradient at every stage.

    ``nu`` overrides ``cfg.nu``.
    """
    cfg = replace(cfg, nu=nu)
    ps = ensemble.point_symmetric

    def rhs(K, V):
        return rhs_batch(K, V, _gradients(K, V, ps, closure), nu)

    times, K, V = integrate_states(ensemble.k, ensemble.v, rhs, cfg)
    A = np.stack([np.asarray(_gradients(K[i], V[i], ps, closure)) for i in range(times.size)])
    return EnsembleTrajectory(times, K, V, A, closure, ps)


@dataclass(frozen=True)
class CrossScaleReport:
    trajectory_deviation: float
    ball_deviation: float
    gradient_contribution_split: dict
    amplitude_ratio: float
    scale_ratio: float
    rho: float

    def to_dict(self) -> dict:
        return {
            "trajectory_deviation": self.trajectory_deviation,
            "ball_deviation": self.ball_deviation,
            "gradient_contribution_split": self.gradient_contribution_split,
            "amplitude_ratio": self.amplitude_ratio,
            "scale_ratio": self.scale_ratio,
            "rho": self.rho,
        }


def _relative_l2(K1, V1, K2, V2) -> float:
    num = np.sum((K1 - K2) ** 2) + np.sum(np.abs(V1 - V2) ** 2)
    den = np.sum(K2 ** 2) + np.sum(np.abs(V2) ** 2)
    return float(np.sqrt(num / den))


def cross_scale_experiment(
    low: KelvinMode,
    high: KelvinMode,
    amplitude_ratio: float,
    nu: float,
    cfg: SimulationConfig,
    rho: float = 0.1,
) -> CrossScaleReport:
    """Measure how much a small-scale mode distorts a large-scale one.

    The high mode's amplitude is rescaled to ``amplitude_ratio * |v_low|``.
    The low-mode trajectory with and without the high pair is compared under
    the full-sum closure, and again under ``BallRestricted(rho)``, where the
    small scale cannot reach the large one.
    """
    k_low, k_high = np.linalg.norm(low.k), np.linalg.norm(high.k)
    if k_high < 5.0 * k_low:
        raise UsageError("cross-scale experiment needs |k_high| >= 5 |k_low|")
    nh = np.linalg.norm(high.v)
    v_high = high.v * (amplitude_ratio * np.linalg.norm(low.v) / nh) if nh > 0 else high.v
    ps = bool(np.all(low.v.real == 0.0) and np.all(v_high.real == 0.0))
    both = ModeEnsemble(np.array([low.k, high.k]), np.array([low.v, v_high]), ps)
    alone = ModeEnsemble(low.k[None, :], low.v[None, :], ps)

    full_both = evolve_ensemble(both, nu, DSFullSum(), cfg)
    full_alone = evolve_ensemble(alone, nu, DSFullSum(), cfg)
    ball = BallRestricted(rho)
    ball_both = evolve_ensemble(both, nu, ball, cfg)
    ball_alone = evolve_ensemble(alone, nu, ball, cfg)

    C = pair_contributions(both.k, both.v, ps)
    split = {
        "low": float(np.linalg.norm(C[0])),
        "high": float(np.linalg.norm(C[1])),
    }
    return CrossScaleReport(
        trajectory_deviation=_relative_l2(full_both.k[:, 0], full_both.v[:, 0], full_alone.k[:, 0], full_alone.v[:, 0]),
        ball_deviation=_relative_l2(ball_both.k[:, 0], ball_both.v[:, 0], ball_alone.k[:, 0], ball_alone.v[:, 0]),
        gradient_contribution_split=split,
        amplitude_ratio=float(amplitude_ratio),
        scale_ratio=float(k_high / k_low),
        rho=rho,
    )
