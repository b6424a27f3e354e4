"""
Primal-dual interior-point solver for weighted quantile regression LPs.

Every problem handled here has the form

    min_b  sum_r  w_r * rho_{tau_r}(y_r - d_r' b)

with per-row quantile levels ``tau_r`` and positive weights ``w_r``. The
reference formulation splits each residual into positive and negative parts
(u, v) and each pairwise penalty difference into (w1, w2); folding the
penalty rows into pseudo-observations with ``tau_r = 1/2`` and ``w_r = 2*lambda_ij``
gives the same primal with far fewer variables, since
``2 * lambda_ij * rho_{1/2}(a_i - a_j) = lambda_ij * |a_i - a_j|``.

The solver works on the bounded dual

    max_x  y' x   s.t.  D' x = D' (w * (1 - tau)),   0 <= x <= w

with Mehrotra predictor-corrector steps (Frisch-Newton). The QR coefficients
are minus the equality multipliers. The Newton system carries the primal
residual ``-D' d`` so rounding in ``D' x = b`` is corrected instead of
accumulated. Normal equations ``D' diag(q) D`` have an arrow structure (block
diagonal in alpha, dense coupling through beta) and are assembled sparse; small
systems are factorized densely.

A point counts as converged only with a two-sided certificate: the relative gap
``|primal - y'd| / (1 + |primal|)`` and the bound error caused by the remaining
``D' d`` must both be within tolerance. Near the optimum the iterate is snapped
to the face defined by its (near) zero residuals and re-certified with an exact
box-constrained dual; this recovers vertex solutions when huge penalty weights
stall the interior iterations.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.optimize import lsq_linear
from scipy.sparse.csgraph import connected_components

from panel.data import FixedEffectsFit, PanelData, as_tau, check_loss
from panel.exceptions import DimensionMismatchError, InvalidProblemError

logger = logging.getLogger(__name__)

# Normal equations up to this size are factorized with dense Cholesky.
DENSE_LIMIT = 1500

# Certificate merit below which snapping to a face is tried during iterations.
POLISH_GATE = 1e-5

# Merit below which a stalled solve is still worth snapping.
POLISH_RESCUE = 1e-3

# Smallest diagonal of the Newton scaling, relative to the largest.
SCALING_FLOOR = 1e-14


@dataclass(frozen=True)
class SolverSettings:
    gap_tol: float = 1e-8
    max_iter: int = 100
    step_fraction: float = 0.9995

    @classmethod
    def from_settings(cls) -> 'SolverSettings':
        from django.conf import settings
        return cls(
            gap_tol=settings.PANELQ_GAP_TOL,
            max_iter=settings.PANELQ_MAX_ITER,
            step_fraction=settings.PANELQ_STEP_FRACTION,
        )


class SolverStatus(str, Enum):
    CONVERGED = 'converged'
    MAX_ITERATIONS = 'max-iterations'
    NUMERICAL_FAILURE = 'numerical-failure'


@dataclass(frozen=True, eq=False)
class QrProblem:
    """A weighted quantile LP over the joint parameter (alpha_1..alpha_k, beta).

    The first ``n_data_rows`` rows are observations; any further rows are
    penalty pseudo-rows touching exactly two alpha coordinates.
    """
    design: sps.csr_matrix
    response: np.ndarray
    tau: np.ndarray
    weight: np.ndarray
    n_alpha: int
    n_data_rows: int = -1

    def __post_init__(self):
        design = sps.csr_matrix(self.design, dtype=float)
        response = np.asarray(self.response, dtype=float).ravel()
        tau = np.broadcast_to(np.asarray(self.tau, dtype=float), response.shape).copy()
        weight = np.broadcast_to(np.asarray(self.weight, dtype=float), response.shape).copy()
        rows = response.size
        if design.shape[0] != rows:
            raise DimensionMismatchError(f"Design has {design.shape[0]} rows, response has {rows}")
        if design.shape[1] < 1:
            raise DimensionMismatchError("Problem dimension must be at least 1")
        if not 0 <= self.n_alpha <= design.shape[1]:
            raise DimensionMismatchError(f"n_alpha={self.n_alpha} exceeds dimension {design.shape[1]}")
        if np.any(~np.isfinite(weight)) or np.any(weight <= 0):
            raise InvalidProblemError("Every row weight must be positive and finite")
        if np.any((tau <= 0) | (tau >= 1)):
            raise InvalidProblemError("Every row quantile level must lie in (0, 1)")
        object.__setattr__(self, 'design', design)
        object.__setattr__(self, 'response', response)
        object.__setattr__(self, 'tau', tau)
        object.__setattr__(self, 'weight', weight)
        if self.n_data_rows < 0:
            object.__setattr__(self, 'n_data_rows', rows)

    @property
    def dim(self) -> int:
        return self.design.shape[1]

    @property
    def rows(self) -> int:
        return self.response.size

    def residuals(self, coef: np.ndarray) -> np.ndarray:
        return self.response - self.design @ np.asarray(coef, dtype=float)

    def objective(self, coef: np.ndarray) -> float:
        """Weighted check loss sum_r w_r * rho_{tau_r}(residual_r)."""
        u = self.residuals(coef)
        return float(np.sum(self.weight * u * (self.tau - (u < 0))))


@dataclass(frozen=True, eq=False)
class SolverReport:
    """Outcome of one solve.

    ``dual`` holds the per-row dual d_r / w_r and ``dual_residual`` the
    absolute ``max |D' d|`` of the returned certificate.
    """
    solution: np.ndarray
    primal_objective: float
    dual_objective: float
    duality_gap: float
    iterations: int
    status: SolverStatus
    dual: np.ndarray = field(repr=False)
    dual_residual: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == SolverStatus.CONVERGED

    def box_violation(self, problem: QrProblem) -> float:
        """Largest excursion of the per-row dual d_r / w_r outside [tau_r - 1, tau_r]."""
        lower = (problem.tau - 1.0) - self.dual
        upper = self.dual - problem.tau
        return float(max(0.0, lower.max(initial=0.0), upper.max(initial=0.0)))

    def summary(self) -> dict:
        return {
            'status': self.status.value,
            'iterations': self.iterations,
            'primal_objective': self.primal_objective,
            'duality_gap': self.duality_gap,
            'dual_residual': self.dual_residual,
        }


@dataclass(frozen=True, eq=False)
class PenaltyGraph:
    """Adaptive convex-clustering weights over individual pairs i < j."""
    n: int
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.left.tolist(), self.right.tolist(), self.weight.tolist()))

    def __len__(self):
        return self.left.size


def _factorize(matrix) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """Return a solver for the SPD normal equations, or None if factorization fails.

    Dense Cholesky for small systems, SuperLU otherwise; on failure the
    diagonal is regularized and factorization retried.
    """
    dense = matrix.shape[0] <= DENSE_LIMIT
    if dense:
        matrix = matrix.toarray() if sps.issparse(matrix) else np.asarray(matrix)
    else:
        matrix = sps.csc_matrix(matrix)
    diag = matrix.diagonal()
    scale = float(np.max(np.abs(diag))) if diag.size else 1.0
    shift = 0.0
    for _ in range(4):
        try:
            if dense:
                factor = sla.cho_factor(matrix + shift * np.eye(matrix.shape[0]), check_finite=True)
                return lambda rhs, factor=factor: sla.cho_solve(factor, rhs)
            lu = spla.splu((matrix + shift * sps.identity(matrix.shape[0], format='csc')).tocsc())
            return lu.solve
        except (sla.LinAlgError, RuntimeError, ValueError):
            shift = max(shift * 100.0, 1e-12 * max(scale, 1.0))
    return None


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest alpha in [0, inf) keeping v + alpha * dv >= 0."""
    negative = dv < 0
    if not np.any(negative):
        return np.inf
    return float(np.min(-v[negative] / dv[negative]))


class _Iterate(NamedTuple):
    solution: np.ndarray
    dual_vec: np.ndarray
    primal: float
    dual: float
    gap: float
    residual: float
    bound_error: float

    @property
    def merit(self) -> float:
        return abs(self.gap) + self.bound_error

    def certified(self, tol: float) -> bool:
        return abs(self.gap) <= tol and self.bound_error <= tol


def _certificate(problem: QrProblem, coef: np.ndarray, d: np.ndarray) -> _Iterate:
    """Score ``coef`` against a box-feasible dual ``d``.

    y'd bounds the optimum from below only when D'd = 0. ``bound_error`` caps
    |(D'd)' coef| relative to the primal, so the gap is meaningful only when it is small.
    """
    primal = problem.objective(coef)
    dual = float(problem.response @ d)
    scale = 1.0 + abs(primal)
    equality = problem.design.T @ d
    spread = 1.0 + float(np.max(np.abs(coef), initial=0.0))
    return _Iterate(
        solution=coef,
        dual_vec=d,
        primal=primal,
        dual=dual,
        gap=(primal - dual) / scale,
        residual=float(np.max(np.abs(equality), initial=0.0)),
        bound_error=float(np.sum(np.abs(equality))) * spread / scale,
    )


def _fused_components(problem: QrProblem, rows: np.ndarray) -> tuple[int, np.ndarray]:
    """Components of the alpha coordinates joined by the given penalty rows."""
    if rows.size == 0:
        return problem.n_alpha, np.arange(problem.n_alpha)
    pairs = problem.design[rows].indices.reshape(-1, 2)
    links = sps.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(problem.n_alpha, problem.n_alpha),
    )
    return connected_components(links, directed=False)


def _snap(problem: QrProblem, coef: np.ndarray, thr: float) -> np.ndarray:
    """Move ``coef`` onto the face where every row with |residual| <= thr fits exactly.

    Penalty rows are satisfied by merging the alpha coordinates they join,
    data rows by a minimum-norm least-squares step in the merged coordinates.
    """
    near = np.abs(problem.residuals(coef)) <= thr
    fused = np.flatnonzero(near[problem.n_data_rows:]) + problem.n_data_rows
    k, labels = _fused_components(problem, fused)
    n_rest = problem.dim - problem.n_alpha
    cols = np.concatenate([labels, k + np.arange(n_rest)])
    merge = sps.csr_matrix(
        (np.ones(problem.dim), (np.arange(problem.dim), cols)), shape=(problem.dim, k + n_rest),
    )
    sizes = np.asarray(merge.sum(axis=0)).ravel()
    reduced = (merge.T @ coef) / sizes
    rows = np.flatnonzero(near[:problem.n_data_rows])
    if rows.size:
        design = (problem.design[rows] @ merge).toarray()
        step, *_ = np.linalg.lstsq(design, problem.response[rows] - design @ reduced, rcond=None)
        reduced = reduced + step
    return merge @ reduced


def _vertex_dual(problem: QrProblem, coef: np.ndarray, thr: float) -> np.ndarray:
    """Dual at the bound given by each residual sign; rows within ``thr`` of zero
    are placed inside their boxes to bring D'd as close to zero as possible."""
    r = problem.residuals(coef)
    w, tau = problem.weight, problem.tau
    d = np.where(r > 0, w * tau, w * (tau - 1.0))
    near = np.abs(r) <= thr
    if np.any(near):
        fixed = np.flatnonzero(~near)
        free = np.flatnonzero(near)
        target = -(problem.design[fixed].T @ d[fixed])
        lower, upper = w[free] * (tau[free] - 1.0), w[free] * tau[free]
        fit = lsq_linear(problem.design[free].T.toarray(), target, bounds=(lower, upper), method='bvls')
        d[free] = np.clip(fit.x, lower, upper)
    return d


def _polish(problem: QrProblem, coef: np.ndarray, tol: float) -> Optional[_Iterate]:
    """Snap a near-optimal point at increasing thresholds until one certifies."""
    scale = 1.0 + float(np.max(np.abs(problem.response), initial=0.0))
    for exponent in range(11, 3, -1):
        thr = scale * 10.0 ** -exponent
        try:
            snapped = _snap(problem, coef, thr)
            candidate = _certificate(problem, snapped, _vertex_dual(problem, snapped, thr))
        except (np.linalg.LinAlgError, ValueError) as e:
            logger.debug(f"Snap at threshold {thr:.1e} failed: {e}")
            continue
        if candidate.certified(tol):
            return candidate
    return None


def solve_weighted_qr(problem: QrProblem, settings: Optional[SolverSettings] = None) -> SolverReport:
    """Solve a weighted per-row-tau quantile regression LP.

    Never raises on non-convergence: the report carries status
    ``max-iterations`` or ``numerical-failure`` and the best iterate.
    """
    settings = settings or SolverSettings()
    tol = settings.gap_tol
    D = problem.design
    Dt = D.T.tocsr()
    y = problem.response
    tau = problem.tau
    u = problem.weight
    m = problem.rows

    c = -y
    # d = x - u(1 - tau) is carried alongside x and s so D'd keeps its precision
    # when penalty weights are many orders of magnitude above the data weights.
    d = np.zeros(m)
    x = u * (1.0 - tau)
    s = u * tau

    # Least-squares start for the equality multipliers.
    solve = _factorize(Dt @ D)
    if solve is None:
        eta = np.zeros(problem.dim)
    else:
        eta = solve(Dt @ c)
    r = c - D @ eta
    eps0 = max(1e-3 * float(np.mean(np.abs(r))), 1e-8)
    z = np.maximum(r, 0.0) + eps0
    w = np.maximum(-r, 0.0) + eps0

    best = None
    polished = None
    status = SolverStatus.MAX_ITERATIONS
    iterations = 0
    next_polish = POLISH_GATE

    for iterations in range(0, settings.max_iter + 1):
        current = _certificate(problem, -eta, d)
        if best is None or current.merit < best.merit:
            best = current
        if current.certified(tol):
            status = SolverStatus.CONVERGED
            best = current
            break
        if current.merit <= next_polish:
            next_polish = current.merit * 1e-2
            polished = _polish(problem, current.solution, tol)
            if polished is not None:
                status = SolverStatus.CONVERGED
                break
        if iterations == settings.max_iter:
            break

        rp = -(Dt @ d)
        rd = c - D @ eta - z + w
        scaling = z / x + w / s
        if not np.all(np.isfinite(scaling)):
            status = SolverStatus.NUMERICAL_FAILURE
            break
        q = 1.0 / np.maximum(scaling, SCALING_FLOOR * float(scaling.max()))
        solve = _factorize(Dt @ sps.diags(q) @ D)
        if solve is None:
            status = SolverStatus.NUMERICAL_FAILURE
            break

        # Predictor (affine scaling) direction.
        rho = rd + z - w
        deta = solve(rp + Dt @ (q * rho))
        dx = q * (D @ deta - rho)
        ds = -dx
        dz = -z - z * dx / x
        dw = -w - w * ds / s

        ap = min(1.0, settings.step_fraction * min(_max_step(x, dx), _max_step(s, ds)))
        ad = min(1.0, settings.step_fraction * min(_max_step(z, dz), _max_step(w, dw)))
        mu = float(x @ z + s @ w)
        if min(ap, ad) < 1.0:
            mu_aff = float((x + ap * dx) @ (z + ad * dz) + (s + ap * ds) @ (w + ad * dw))
            target = (mu_aff / mu) ** 3 * mu / (2 * m)

            # Corrector with centering.
            rxz = target - x * z - dx * dz
            rsw = target - s * w - ds * dw
            rho = rd - rxz / x + rsw / s
            deta = solve(rp + Dt @ (q * rho))
            dx = q * (D @ deta - rho)
            ds = -dx
            dz = (rxz - z * dx) / x
            dw = (rsw - w * ds) / s
            ap = min(1.0, settings.step_fraction * min(_max_step(x, dx), _max_step(s, ds)))
            ad = min(1.0, settings.step_fraction * min(_max_step(z, dz), _max_step(w, dw)))

        if not all(np.isfinite(v).all() for v in (dx, deta, dz, dw)):
            status = SolverStatus.NUMERICAL_FAILURE
            break

        d = d + ap * dx
        x = x + ap * dx
        s = s + ap * ds
        eta = eta + ad * deta
        z = z + ad * dz
        w = w + ad * dw

    if polished is None and best.merit <= POLISH_RESCUE:
        polished = _polish(problem, best.solution, tol)
        if polished is not None:
            status = SolverStatus.CONVERGED
    if polished is not None:
        best = polished
        logger.debug(f"QR solve certified on a snapped face after {iterations} iterations (gap={best.gap:.3e})")

    if status != SolverStatus.CONVERGED:
        logger.warning(
            f"QR solve ended with status {status.value} after {iterations} iterations "
            f"(gap={best.gap:.3e}, dual residual={best.residual:.3e})"
        )
    return SolverReport(
        solution=best.solution,
        primal_objective=best.primal,
        dual_objective=best.dual,
        duality_gap=best.gap,
        iterations=iterations,
        status=status,
        dual=best.dual_vec / u,
        dual_residual=best.residual,
    )


def build_grouped_problem(data: PanelData, tau, membership: np.ndarray, k: int) -> QrProblem:
    """QR problem with one intercept per group (``membership`` maps individual -> group)."""
    tau = as_tau(tau)
    membership = np.asarray(membership, dtype=np.int64)
    if membership.size != data.n:
        raise DimensionMismatchError(f"membership has {membership.size} entries, panel has n={data.n}")
    rows = np.arange(data.N)
    intercepts = sps.csr_matrix((np.ones(data.N), (rows, membership[data.ids])), shape=(data.N, k))
    design = sps.hstack([intercepts, sps.csr_matrix(data.x)], format='csr') if data.p else intercepts
    return QrProblem(design=design, response=data.y, tau=tau, weight=1.0, n_alpha=k)


def build_fe_problem(data: PanelData, tau) -> QrProblem:
    """Fixed effects QR problem: one intercept per individual plus common slopes."""
    return build_grouped_problem(data, tau, np.arange(data.n), data.n)


def build_penalty_graph(fe_fit: FixedEffectsFit, lam: float, cap: float = 1e8) -> PenaltyGraph:
    """Adaptive weights lambda_ij = min(lam / (a_i - a_j)^2, cap * lam) for all i < j."""
    if lam < 0:
        raise InvalidProblemError(f"lambda must be non-negative, got {lam}")
    alpha = np.asarray(fe_fit.alpha, dtype=float)
    n = alpha.size
    if lam == 0 or n < 2:
        empty = np.zeros(0, dtype=np.int64)
        return PenaltyGraph(n=n, left=empty, right=empty, weight=np.zeros(0))
    left, right = np.triu_indices(n, k=1)
    gap2 = (alpha[left] - alpha[right]) ** 2
    with np.errstate(divide='ignore'):
        weight = np.where(gap2 > 0, lam / gap2, np.inf)
    weight = np.minimum(weight, cap * lam)
    return PenaltyGraph(n=n, left=left, right=right, weight=weight)


def build_penalized_problem(data: PanelData, tau, graph: PenaltyGraph) -> QrProblem:
    """FE problem plus one pseudo-row per edge: response 0, e_i - e_j, tau 1/2, weight 2*lambda_ij."""
    base = build_fe_problem(data, tau)
    if len(graph) == 0:
        return base
    if graph.n != data.n or graph.right.max() >= data.n:
        raise DimensionMismatchError("Penalty graph references individuals outside the panel")
    edges = len(graph)
    rows = np.repeat(np.arange(edges), 2)
    cols = np.column_stack([graph.left, graph.right]).ravel()
    vals = np.tile([1.0, -1.0], edges)
    penalty = sps.csr_matrix((vals, (rows, cols)), shape=(edges, base.dim))
    return QrProblem(
        design=sps.vstack([base.design, penalty], format='csr'),
        response=np.concatenate([base.response, np.zeros(edges)]),
        tau=np.concatenate([base.tau, np.full(edges, 0.5)]),
        weight=np.concatenate([base.weight, 2.0 * graph.weight]),
        n_alpha=data.n,
        n_data_rows=data.N,
    )


def raw_lambda(data: PanelData, lambda_tilde: float) -> float:
    """Convert a normalized grid value to the unnormalized per-pair LP scale.

    The normalized objective is (1/N) sum rho + lambda_tilde/(n(n-1)) * sum_{i != j};
    multiplying by N and folding ordered pairs gives 2 N lambda_tilde / (n(n-1)) per pair i < j.
    """
    if data.n < 2:
        return 0.0
    return 2.0 * data.N * lambda_tilde / (data.n * (data.n - 1))


def solve_fe(data: PanelData, tau, settings: Optional[SolverSettings] = None) -> FixedEffectsFit:
    tau = as_tau(tau)
    report = solve_weighted_qr(build_fe_problem(data, tau), settings)
    return FixedEffectsFit(
        alpha=report.solution[:data.n],
        beta=report.solution[data.n:],
        objective=report.primal_objective,
        tau=tau,
        report=report,
    )


def solve_penalized(
    data: PanelData,
    tau,
    lambda_tilde: float,
    fe_fit: FixedEffectsFit,
    settings: Optional[SolverSettings] = None,
    cap: float = 1e8,
) -> tuple[np.ndarray, np.ndarray, SolverReport]:
    """Minimize the normalized convex-clustering penalized QR objective at one grid value.

    Returns:
        (alpha, beta, report) with alpha of length n and beta of length p.
    """
    tau = as_tau(tau)
    if abs(fe_fit.tau - tau) > 1e-12:
        raise InvalidProblemError(f"Preliminary fit was computed at tau={fe_fit.tau}, not {tau}")
    graph = build_penalty_graph(fe_fit, raw_lambda(data, lambda_tilde), cap)
    report = solve_weighted_qr(build_penalized_problem(data, tau, graph), settings)
    return report.solution[:data.n], report.solution[data.n:], report


def data_loss(data: PanelData, tau, alpha, beta) -> float:
    """Unpenalized check loss of a coefficient vector on the panel."""
    fitted = np.asarray(alpha)[data.ids] + (data.x @ np.asarray(beta) if data.p else 0.0)
    return float(np.sum(check_loss(data.y - fitted, tau)))
