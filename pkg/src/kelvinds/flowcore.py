"""Shared value types, base-flow presets and validity checks.

Wavevectors are real arrays of shape ``(3,)``, mode amplitudes complex arrays
of shape ``(3,)`` and velocity gradients real ``(3, 3)`` arrays with the
convention ``A[m, n] = dU_m/dx_n`` for the base flow ``U = A @ x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRACE_TOL = 1e-12


class KelvinError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(KelvinError, ValueError):
    """An operation was called outside its mathematical domain (e.g. k = 0)."""


class ValidationError(KelvinError, ValueError):
    """Input violates a construction-time invariant."""


class UsageError(KelvinError, ValueError):
    """Arguments are individually valid but do not fit together."""


class ConsistencyError(KelvinError):
    """A computed quantity violates a structural identity it must satisfy."""


class IntegrationError(KelvinError, RuntimeError):
    """Time integration failed.

    Attributes
    ----------
    time : float
        Simulation time at which the failure was detected.
    mode_index : int or None
        Index of the offending mode for ensemble runs, if known.
    """

    def __init__(self, message: str, time: float, mode_index: int | None = None):
        where = f" (t={time:.6g}" + (f", mode {mode_index})" if mode_index is not None else ")")
        super().__init__(message + where)
        self.time = time
        self.mode_index = mode_index


def as_wavevector(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.shape != (3,):
        raise ValidationError(f"wavevector must have shape (3,), got {k.shape}")
    return k


def as_amplitude(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.shape != (3,):
        raise ValidationError(f"amplitude must have shape (3,), got {v.shape}")
    return v


def as_gradient(A, tol: float = TRACE_TOL) -> np.ndarray:
    """Return ``A`` as a float (3, 3) array, rejecting matrices with a trace."""
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise ValidationError(f"gradient matrix must have shape (3, 3), got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("gradient matrix has non-finite entries")
    tr = abs(np.trace(A))
    if tr > tol * max(np.linalg.norm(A), np.finfo(float).tiny):
        raise ValidationError(f"gradient matrix is not trace-free: |tr(A)| = {tr:.3e}")
    return A


def is_pure_imaginary(v, tol: float = TRACE_TOL) -> bool:
    v = np.asarray(v, dtype=complex)
    return bool(np.max(np.abs(v.real), initial=0.0) <= tol * np.linalg.norm(v))


_PRESET_ARITY = {"rotation": 1, "plane_strain": 1, "shear": 1, "elliptic": 2}


@dataclass(frozen=True)
class BaseFlowSpec:
    """A constant uniform-gradient base flow.

    ``kind`` is one of ``rotation(omega)``, ``plane_strain(s)``, ``shear(s)``,
    ``elliptic(a, b)`` or ``custom`` (with ``matrix`` set).
    """

    kind: str
    params: tuple[float, ...] = ()
    matrix: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.kind == "custom":
            if self.matrix is None:
                raise ValidationError("custom base flow needs a matrix")
            as_gradient(self.matrix)
        elif self.kind in _PRESET_ARITY:
            if len(self.params) != _PRESET_ARITY[self.kind]:
                raise ValidationError(
                    f"{self.kind} takes {_PRESET_ARITY[self.kind]} parameter(s), got {len(self.params)}"
                )
        else:
            raise ValidationError(f"unknown base flow kind {self.kind!r}")

    @classmethod
    def rotation(cls, omega: float) -> BaseFlowSpec:
        return cls("rotation", (float(omega),))

    @classmethod
    def plane_strain(cls, s: float) -> BaseFlowSpec:
        return cls("plane_strain", (float(s),))

    @classmethod
    def shear(cls, s: float) -> BaseFlowSpec:
        return cls("shear", (float(s),))

    @classmethod
    def elliptic(cls, a: float, b: float) -> BaseFlowSpec:
        return cls("elliptic", (float(a), float(b)))

    @classmethod
    def custom(cls, A) -> BaseFlowSpec:
        A = np.asarray(A, dtype=float)
        return cls("custom", matrix=tuple(tuple(float(x) for x in row) for row in A))

    @classmethod
    def parse(cls, text: str) -> BaseFlowSpec:
        """Parse ``name:p1,p2,...``, e.g. ``rotation:1`` or ``elliptic:1.5,1``.

        ``custom`` expects the nine entries of the matrix in row-major order.
        """
        name, _, rest = text.partition(":")
        name = name.strip().lower().replace("-", "_")
        name = {"strain": "plane_strain", "planestrain": "plane_strain"}.get(name, name)
        try:
            values = tuple(float(x) for x in rest.split(",") if x.strip())
        except ValueError as exc:
            raise ValidationError(f"bad base flow parameters in {text!r}") from exc
        if name == "custom":
            if len(values) != 9:
                raise ValidationError("custom base flow needs 9 entries")
            return cls.custom(np.reshape(values, (3, 3)))
        return cls(name, values)

    def __str__(self) -> str:
        if self.kind == "custom":
            vals = [x for row in self.matrix for x in row]
        else:
            vals = self.params
        return f"{self.kind}:" + ",".join(repr(float(x)) for x in vals)


def base_flow_matrix(spec: BaseFlowSpec) -> np.ndarray:
    """Return the constant gradient matrix of a base-flow preset."""
    A = np.zeros((3, 3))
    if spec.kind == "rotation":
        (omega,) = spec.params
        A[0, 1], A[1, 0] = -omega, omega
    elif spec.kind == "plane_strain":
        (s,) = spec.params
        A[0, 0], A[1, 1] = s, -s
    elif spec.kind == "shear":
        (s,) = spec.params
        A[0, 1] = s
    elif spec.kind == "elliptic":
        a, b = spec.params
        A[0, 1], A[1, 0] = -a, b
    else:
        A = as_gradient(spec.matrix)
    return A


def validate_base_flow(A) -> dict[str, float]:
    """Report how far ``A`` is from an admissible steady base flow.

    Returns the absolute trace and the Frobenius norm of the antisymmetric
    part of ``A @ A`` (twice it, strictly: ``||AA - (AA)^T||``). Nothing is
    raised; acceptance is the caller's business.
    """
    A = np.asarray(A, dtype=float)
    AA = A @ A
    return {
        "trace_defect": float(abs(np.trace(A))),
        "symmetry_defect": float(np.linalg.norm(AA - AA.T)),
    }


def incompressible_projection(k, w) -> np.ndarray:
    """Project ``w`` onto the plane orthogonal to ``k``."""
    k = as_wavevector(k)
    w = np.asarray(w)
    k2 = k @ k
    if k2 == 0.0:
        raise DomainError("projection onto k-orthogonal plane needs |k| > 0")
    return w - k * ((k @ w) / k2)
