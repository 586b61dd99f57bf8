"""Sparse direct solves and damped Newton iteration."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import ConfigurationError, ConvergenceError, SolverError
from .assembly import BlockSystem, WeakForm, assemble, residual
from .spaces import BlockVector

log = logging.getLogger(__name__)

PIVOT_RATIO_TOL = 1e-13


@dataclass(frozen=True)
class NewtonSettings:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-13
    max_iter: int = 25
    damping: float = 1.0
    max_halvings: int = 8

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ConfigurationError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigurationError("damping must lie in (0, 1]")


def _null_diagnostic(A, layout, seed=0):
    """Approximate null vector from a slightly shifted solve with a random rhs."""
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    scale = max(abs(A).max(), 1.0)
    try:
        lu = spla.splu((A + 1e-10 * scale * sp.identity(n)).tocsc())
        v = lu.solve(rng.standard_normal(n))
    except RuntimeError:
        return None, {}
    v = v / np.linalg.norm(v)
    blocks = {name: float(np.linalg.norm(v[layout.slice(name)])) for name in layout.names}
    return v, blocks


def factorize(A):
    """LU factorisation that refuses (numerically) singular matrices."""
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        return None, str(exc)
    d = np.abs(lu.U.diagonal())
    if d.size and (d.min() == 0.0 or d.min() < PIVOT_RATIO_TOL * d.max()):
        return None, f"pivot ratio {d.min() / d.max():.2e}"
    return lu, ""


def solve_linear(system: BlockSystem) -> BlockVector:
    A = system.matrix.tocsc()
    b = system.rhs.data
    lu, why = factorize(A)
    if lu is None:
        v, blocks = _null_diagnostic(A, system.layout)
        top = max(blocks, key=blocks.get) if blocks else "?"
        raise SolverError(f"singular system ({why}); near-null vector concentrated in block {top!r}",
                          null_vector=v, blocks=blocks)
    x = lu.solve(b)
    r = np.linalg.norm(A @ x - b)
    if not np.isfinite(r) or r > 1e-10 * (1.0 + np.linalg.norm(b)):
        # one step of iterative refinement before giving up
        x = x + lu.solve(b - A @ x)
        r = np.linalg.norm(A @ x - b)
        if not np.isfinite(r) or r > 1e-10 * (1.0 + np.linalg.norm(b)):
            v, blocks = _null_diagnostic(A, system.layout)
            raise SolverError(f"linear solve residual {r:.3e} too large", null_vector=v, blocks=blocks)
    return BlockVector(system.layout, x)


def newton_solve(form: WeakForm, initial: BlockVector, settings: NewtonSettings | None = None,
                 displacement=None) -> BlockVector:
    """Damped Newton on ``form``; the returned vector carries ``.history``."""
    settings = settings or NewtonSettings()
    x = initial.copy()
    system = assemble(form, x, displacement=displacement)
    r0 = system.residual_norm
    history = [r0]
    log.info("newton it=0 |R|=%.3e", r0)
    rnorm = r0
    for it in range(1, settings.max_iter + 1):
        if rnorm <= settings.abs_tol or rnorm <= settings.rel_tol * r0:
            break
        try:
            dx = solve_linear(system).data
        except SolverError as exc:
            raise ConvergenceError(f"Newton step {it}: {exc}", rnorm, history) from exc
        step = settings.damping
        trial = None
        for _ in range(settings.max_halvings + 1):
            cand = BlockVector(x.layout, x.data + step * dx)
            try:
                rc = np.linalg.norm(residual(form, cand, displacement))
            except Exception as exc:  # inverted cells while stepping
                log.debug("newton trial step %.3g failed: %s", step, exc)
                rc = np.inf
            if np.isfinite(rc) and (rc < rnorm or rnorm <= 10 * settings.abs_tol):
                trial = cand
                break
            step *= 0.5
        if trial is None:
            raise ConvergenceError(
                f"Newton line search failed at iteration {it} (|R|={rnorm:.3e})", rnorm, history)
        x = trial
        system = assemble(form, x, displacement=displacement)
        rnorm = system.residual_norm
        history.append(rnorm)
        log.info("newton it=%d |R|=%.3e step=%.3g", it, rnorm, step)
    else:
        if not (rnorm <= settings.abs_tol or rnorm <= settings.rel_tol * r0):
            raise ConvergenceError(
                f"Newton did not converge in {settings.max_iter} iterations (|R|={rnorm:.3e})",
                rnorm, history)
    if not (rnorm <= settings.abs_tol or rnorm <= settings.rel_tol * r0):
        raise ConvergenceError(f"Newton stalled at |R|={rnorm:.3e}", rnorm, history)
    x.history = history
    return x
