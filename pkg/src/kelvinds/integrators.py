"""Fixed-step RK4 and adaptive RK45 drivers for tuple-of-array states.

Every solver in the package goes through :func:`rk4_step` so that two code
paths evaluating the same right-hand side on the same arrays produce
bit-identical results.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import RK45

from .flowcore import IntegrationError

State = tuple[np.ndarray, ...]
RHS = Callable[[float, State], State]


def rk4_step(f: RHS, t: float, y: State, h: float) -> State:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, tuple(a + (0.5 * h) * b for a, b in zip(y, k1)))
    k3 = f(t + 0.5 * h, tuple(a + (0.5 * h) * b for a, b in zip(y, k2)))
    k4 = f(t + h, tuple(a + h * b for a, b in zip(y, k3)))
    return tuple(
        a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    )


def step_count(t_end: float, dt: float) -> int:
    """Number of RK4 steps of size ``dt`` (last one trimmed) covering ``t_end``."""
    return max(1, math.ceil(t_end / dt * (1.0 - 1e-12)))


def sample_times(t_end: float, dt: float, sample_every: int) -> np.ndarray:
    n = step_count(t_end, dt)
    idx = list(range(0, n, sample_every)) + [n]
    return np.array([min(i * dt, t_end) for i in idx])


def _bad_row(y: State) -> int | None:
    for a in y:
        if a.ndim >= 2:
            bad = ~np.isfinite(a).reshape(a.shape[0], -1).all(axis=1)
            if bad.any():
                return int(np.argmax(bad))
    return None


def integrate_rk4(
    f: RHS,
    y0: State,
    t_end: float,
    dt: float,
    sample_every: int = 1,
    post_step: Callable[[State], State] | None = None,
) -> tuple[np.ndarray, list[State]]:
    """Integrate ``dy/dt = f(t, y)`` from 0 to ``t_end`` with classical RK4.

    Steps are taken at ``t_i = i * dt`` (times are never accumulated), the
    last step is shortened to land on ``t_end``. States are recorded every
    ``sample_every`` steps and at the final time.
    """
    n = step_count(t_end, dt)
    times, states = [0.0], [y0]
    y = y0
    for i in range(n):
        t = i * dt
        h = min(dt, t_end - t)
        y = rk4_step(f, t, y, h)
        if post_step is not None:
            y = post_step(y)
        if not all(np.all(np.isfinite(a)) for a in y):
            raise IntegrationError("non-finite state", time=t + h, mode_index=_bad_row(y))
        if (i + 1) % sample_every == 0 or i + 1 == n:
            times.append(t_end if i + 1 == n else (i + 1) * dt)
            states.append(y)
    return np.array(times), states


def _packer(y0: State):
    shapes = [a.shape for a in y0]
    cplx = [np.iscomplexobj(a) for a in y0]

    def pack(y: Sequence[np.ndarray]) -> np.ndarray:
        parts = []
        for a, c in zip(y, cplx):
            parts.append(a.real.ravel())
            if c:
                parts.append(a.imag.ravel())
        return np.concatenate(parts)

    def unpack(x: np.ndarray) -> State:
        out, pos = [], 0
        for shape, c in zip(shapes, cplx):
            size = int(np.prod(shape))
            re = x[pos:pos + size].reshape(shape)
            pos += size
            if c:
                im = x[pos:pos + size].reshape(shape)
                pos += size
                out.append(re + 1j * im)
            else:
                out.append(re.copy())
        return tuple(out)

    return pack, unpack


def integrate_adaptive(
    f: RHS,
    y0: State,
    t_eval: np.ndarray,
    rtol: float,
    atol: float,
    first_step: float | None = None,
) -> tuple[np.ndarray, list[State]]:
    """Dormand-Prince RK45 (scipy stepper) with dense output at ``t_eval``.

    Raises
    ------
    IntegrationError
        If the step size underflows or the state becomes non-finite; the
        error carries the solver time at which it happened.
    """
    pack, unpack = _packer(y0)
    t_eval = np.asarray(t_eval, dtype=float)

    def flat(t, x):
        return pack(f(t, unpack(x)))

    solver = RK45(flat, 0.0, pack(y0), float(t_eval[-1]), rtol=rtol, atol=atol,
                  first_step=first_step)
    states = [y0]
    j = 1
    while j < t_eval.size:
        msg = solver.step()
        if solver.status == "failed" or not np.all(np.isfinite(solver.y)):
            raise IntegrationError(f"adaptive integration failed: {msg or 'non-finite state'}",
                                   time=float(solver.t))
        dense = solver.dense_output()
        while j < t_eval.size and t_eval[j] <= solver.t:
            x = solver.y if t_eval[j] == solver.t else dense(t_eval[j])
            states.append(unpack(x))
            j += 1
    return t_eval, states
