"""Sparse regression solvers for the coefficient matrix.

Solves xdot ~= theta @ xi column by column with sparsity-promoting
optimizers. The L1-penalized objective is realized through hard-thresholding
schemes (STLSQ and SR3) as in standard practice; plain least squares covers
the unpenalized case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMIZER_KINDS = ("STLSQ", "SR3", "LeastSquares")

DEFAULT_STLSQ_THRESHOLD = 0.1
DEFAULT_SR3_THRESHOLD = 0.03
DEFAULT_RIDGE_ALPHA = 0.05
DEFAULT_NU = 1.0
DEFAULT_MAX_ITER = 20

# Fall back to the pseudo-inverse when the normal equations are worse
# conditioned than this.
CONDITION_LIMIT = 1e12

SR3_CONVERGENCE_TOL = 1e-10


class OptimizerSpecError(ValueError):
    """Invalid optimizer specification."""


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    threshold: float = 0.0
    ridge_alpha: float = DEFAULT_RIDGE_ALPHA
    nu: float = DEFAULT_NU
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise OptimizerSpecError(
                f"unknown optimizer kind {self.kind!r}; expected one of {OPTIMIZER_KINDS}"
            )
        if self.threshold < 0:
            raise OptimizerSpecError(f"threshold must be >= 0, got {self.threshold}")
        if self.ridge_alpha < 0:
            raise OptimizerSpecError(f"ridge_alpha must be >= 0, got {self.ridge_alpha}")
        if self.nu <= 0:
            raise OptimizerSpecError(f"nu must be > 0, got {self.nu}")
        if self.max_iter < 1:
            raise OptimizerSpecError(f"max_iter must be >= 1, got {self.max_iter}")


def stlsq_spec(threshold: float = DEFAULT_STLSQ_THRESHOLD, **kw) -> OptimizerSpec:
    return OptimizerSpec(kind="STLSQ", threshold=threshold, **kw)


def sr3_spec(threshold: float = DEFAULT_SR3_THRESHOLD, **kw) -> OptimizerSpec:
    return OptimizerSpec(kind="SR3", threshold=threshold, **kw)


@dataclass
class SolveDiagnostics:
    """Iteration history, serialized into run manifests.

    support_history[j][k] is the active-feature index list for output
    dimension j after iteration k; residuals mirror that layout.
    """

    support_history: list[list[list[int]]] = field(default_factory=list)
    residuals: list[list[float]] = field(default_factory=list)
    zeroed_dimensions: list[int] = field(default_factory=list)
    ill_conditioned: bool = False

    def to_dict(self) -> dict:
        return {
            "support_history": self.support_history,
            "residuals": self.residuals,
            "zeroed_dimensions": self.zeroed_dimensions,
            "ill_conditioned": self.ill_conditioned,
        }


@dataclass
class Coefficients:
    xi: np.ndarray  # (p, n)
    support: np.ndarray  # (p, n) bool
    diagnostics: SolveDiagnostics = field(default_factory=SolveDiagnostics)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.support = np.asarray(self.support, dtype=bool)
        if self.xi.shape != self.support.shape:
            raise ValueError("xi and support shapes differ")
        if not np.all(np.isfinite(self.xi)):
            raise ValueError("coefficients contain non-finite entries")
        if not np.array_equal(self.support, self.xi != 0.0):
            raise ValueError("support mask inconsistent with nonzeros")

    @property
    def active_terms(self) -> int:
        return int(self.support.sum())


def _ridge_solve(A: np.ndarray, b: np.ndarray, alpha: float, diag: SolveDiagnostics) -> np.ndarray:
    """Ridge least squares via the normal equations, pinv on bad conditioning."""
    gram = A.T @ A + alpha * np.eye(A.shape[1])
    if np.linalg.cond(gram) > CONDITION_LIMIT:
        diag.ill_conditioned = True
        return np.linalg.pinv(gram) @ (A.T @ b)
    return np.linalg.solve(gram, A.T @ b)


def _lstsq(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(A, b, rcond=None)[0]


def stlsq(theta: np.ndarray, xdot: np.ndarray, spec: OptimizerSpec) -> Coefficients:
    """Sequentially thresholded least squares, solved per output dimension.

    Ridge-regularized fits drive support selection; once the support is
    stable the coefficients are re-fit by unregularized least squares on
    that support, re-thresholding until the refit is a genuine fixed point
    (all surviving magnitudes >= threshold). threshold == 0 degenerates to
    a single ridge solve.
    """
    if spec.kind != "STLSQ":
        raise OptimizerSpecError(f"stlsq called with kind {spec.kind!r}")
    theta, xdot = _check_shapes(theta, xdot)
    K, p = theta.shape
    n = xdot.shape[1]
    diag = SolveDiagnostics()
    xi = np.zeros((p, n))

    for j in range(n):
        b = xdot[:, j]
        history: list[list[int]] = []
        resids: list[float] = []

        def record(coef_j):
            history.append(np.flatnonzero(coef_j != 0.0).tolist())
            resids.append(float(np.linalg.norm(theta @ coef_j - b)))

        if not np.any(b):
            # all-zero target: the zero model is exact
            coef = np.zeros(p)
            record(coef)
        elif spec.threshold == 0.0:
            coef = _ridge_solve(theta, b, spec.ridge_alpha, diag)
            record(coef)
        else:
            active = np.ones(p, dtype=bool)
            for _ in range(spec.max_iter):
                fit = _ridge_solve(theta[:, active], b, spec.ridge_alpha, diag)
                keep = np.abs(fit) >= spec.threshold
                trial = np.zeros(p)
                trial[active] = np.where(keep, fit, 0.0)
                record(trial)
                new_active = active.copy()
                new_active[active] = keep
                if np.array_equal(new_active, active):
                    break
                active = new_active
                if not active.any():
                    break
            # unregularized polish: refit on the support and keep
            # thresholding until nothing falls below (terminates because the
            # support only shrinks)
            coef = np.zeros(p)
            while active.any():
                fit = _lstsq(theta[:, active], b)
                keep = np.abs(fit) >= spec.threshold
                if keep.all():
                    coef[active] = fit
                    record(coef)
                    break
                new_active = active.copy()
                new_active[active] = keep
                active = new_active
                trial = np.zeros(p)
                trial[new_active] = fit[keep]
                record(trial)
        xi[:, j] = coef
        diag.support_history.append(history)
        diag.residuals.append(resids)
        if not np.any(xi[:, j]):
            diag.zeroed_dimensions.append(j)

    return Coefficients(xi=xi, support=xi != 0.0, diagnostics=diag)


def sr3(theta: np.ndarray, xdot: np.ndarray, spec: OptimizerSpec) -> Coefficients:
    """Sparse relaxed regularized regression with hard thresholding.

    Alternates a ridge-like solve for the relaxed coefficients with hard
    thresholding of an auxiliary copy, then unbiases by unregularized least
    squares on the auxiliary support.
    """
    if spec.kind != "SR3":
        raise OptimizerSpecError(f"sr3 called with kind {spec.kind!r}")
    theta, xdot = _check_shapes(theta, xdot)
    K, p = theta.shape
    n = xdot.shape[1]
    diag = SolveDiagnostics()

    gram = theta.T @ theta + np.eye(p) / spec.nu
    use_pinv = np.linalg.cond(gram) > CONDITION_LIMIT
    if use_pinv:
        diag.ill_conditioned = True
        gram_inv = np.linalg.pinv(gram)

    xi = np.zeros((p, n))
    for j in range(n):
        b = xdot[:, j]
        rhs0 = theta.T @ b
        relaxed = _lstsq(theta, b)
        aux = np.where(np.abs(relaxed) >= spec.threshold, relaxed, 0.0)
        for _ in range(spec.max_iter):
            rhs = rhs0 + aux / spec.nu
            relaxed = (gram_inv @ rhs) if use_pinv else np.linalg.solve(gram, rhs)
            new_aux = np.where(np.abs(relaxed) >= spec.threshold, relaxed, 0.0)
            delta = float(np.max(np.abs(new_aux - aux), initial=0.0))
            aux = new_aux
            if delta < SR3_CONVERGENCE_TOL:
                break
        support_j = aux != 0.0
        coef = np.zeros(p)
        if support_j.any():
            coef[support_j] = _lstsq(theta[:, support_j], b)
        else:
            diag.zeroed_dimensions.append(j)
        # exact zeros produced by the refit stay out of the support
        xi[:, j] = coef
        diag.support_history.append([np.flatnonzero(coef != 0.0).tolist()])
        diag.residuals.append([float(np.linalg.norm(theta @ coef - b))])

    return Coefficients(xi=xi, support=xi != 0.0, diagnostics=diag)


def least_squares(theta: np.ndarray, xdot: np.ndarray, spec: OptimizerSpec) -> Coefficients:
    theta, xdot = _check_shapes(theta, xdot)
    xi = _lstsq(theta, xdot)
    diag = SolveDiagnostics()
    for j in range(xdot.shape[1]):
        diag.support_history.append([np.flatnonzero(xi[:, j] != 0.0).tolist()])
        diag.residuals.append([float(np.linalg.norm(theta @ xi[:, j] - xdot[:, j]))])
    return Coefficients(xi=xi, support=xi != 0.0, diagnostics=diag)


def solve(theta: np.ndarray, xdot: np.ndarray, spec: OptimizerSpec) -> Coefficients:
    """Dispatch on the optimizer kind."""
    if spec.kind == "STLSQ":
        return stlsq(theta, xdot, spec)
    if spec.kind == "SR3":
        return sr3(theta, xdot, spec)
    return least_squares(theta, xdot, spec)


def _check_shapes(theta: np.ndarray, xdot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    if xdot.ndim == 1:
        xdot = xdot[:, None]
    if theta.ndim != 2 or xdot.ndim != 2:
        raise ValueError("theta and xdot must be matrices")
    if theta.shape[0] != xdot.shape[0]:
        raise ValueError(
            f"theta has {theta.shape[0]} rows but xdot has {xdot.shape[0]}"
        )
    return theta, xdot
