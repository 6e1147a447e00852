"""Levenberg-Marquardt on a manifold-valued state.

The state is opaque to the solver; ``residuals(state)`` returns the residual
vector and its Jacobian with respect to a local increment, and
``retract(state, delta)`` applies an increment. This lets rotations be
updated by composing axis-angle increments instead of adding to angles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..errors import ConvergenceError


@dataclass
class LMResult:
    state: Any
    rms: float
    iterations: int  # accepted steps
    rms_history: list = field(default_factory=list)  # rms after each accepted step, starting with the initial


def levenberg_marquardt(
    residuals: Callable,
    retract: Callable,
    state,
    max_iter: int = 100,
    step_tol: float = 1e-10,
    max_growth: int = 10,
    lam0: float = 1e-3,
    rms_count: int | None = None,
    rel_tol: float = 1e-14,
) -> LMResult:
    """Minimize ``|residuals(state)|^2``.

    Stops when the computed step is shorter than ``step_tol``, when the
    linearized model predicts a relative cost decrease below ``rel_tol``
    (a stationary point), or after ``max_iter`` trials. ``rms_count`` sets the divisor of the reported RMS
    (defaults to the residual length; pass the number of 2D points to get a
    per-point pixel RMS).
    """
    r, jac = residuals(state)
    cost = float(r @ r)
    n_res = max(rms_count or len(r), 1)
    history = [np.sqrt(cost / n_res)]
    accepted = 0
    growth = 0
    lam = lam0

    for _ in range(max_iter):
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag <= 0] = 1.0
        delta = _solve(jtj + lam * np.diag(diag), -grad)
        if not np.all(np.isfinite(delta)) or np.linalg.norm(delta) < step_tol:
            break
        lin = r + jac @ delta
        if cost - float(lin @ lin) <= rel_tol * cost:
            break
        trial = retract(state, delta)
        r_new, jac_new = residuals(trial)
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new < cost:
            state, r, jac, cost = trial, r_new, jac_new, cost_new
            accepted += 1
            growth = 0
            lam = max(lam / 10.0, 1e-12)
            history.append(np.sqrt(cost / n_res))
        else:
            growth += 1
            lam *= 10.0
            if growth >= max_growth:
                raise ConvergenceError(
                    f"least-squares adjustment diverged: residual grew {growth} consecutive iterations",
                    residual=float(np.sqrt(cost / n_res)),
                )
    return LMResult(state=state, rms=float(np.sqrt(cost / n_res)), iterations=accepted, rms_history=history)


def _solve(a, b):
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(a, b, rcond=None)[0]
