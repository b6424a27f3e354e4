"""
Panel data domain types, the check loss and residual bookkeeping.

Panels are stored row-major with an individual index per row, so unbalanced
panels need no padding. Individuals are indexed ``0..n-1`` internally; the
original identifiers from an input file are kept in ``labels``.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DimensionMismatchError, InvalidProblemError


@dataclass(frozen=True)
class QuantileLevel:
    """A quantile level tau in the open interval (0, 1)."""
    tau: float

    def __post_init__(self):
        if not (0.0 < float(self.tau) < 1.0):
            raise InvalidProblemError(f"Quantile level must lie in (0, 1), got {self.tau}")
        object.__setattr__(self, 'tau', float(self.tau))

    def __float__(self):
        return self.tau


def as_tau(tau) -> float:
    """Accept a QuantileLevel or a bare float and return the validated float."""
    if isinstance(tau, QuantileLevel):
        return tau.tau
    return QuantileLevel(tau).tau


@dataclass(frozen=True, eq=False)
class PanelData:
    """Responses and covariates indexed by (individual, time).

    Rows are sorted by individual so that individual ``i`` owns the contiguous
    block ``offsets[i]:offsets[i + 1]``.
    """
    ids: np.ndarray
    y: np.ndarray
    x: np.ndarray
    labels: tuple = ()
    times: Optional[np.ndarray] = None
    covariate_names: tuple = ()
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.size == 0:
            x = np.zeros((y.size, 0))
        elif x.ndim == 1:
            x = x.reshape(-1, 1)
        if ids.ndim != 1 or y.ndim != 1 or ids.size != y.size or x.shape[0] != y.size:
            raise DimensionMismatchError(
                f"Panel arrays are misaligned: ids={ids.shape}, y={y.shape}, x={x.shape}"
            )
        if y.size == 0:
            raise DimensionMismatchError("Panel has no observations")
        if ids.min() < 0:
            raise DimensionMismatchError("Individual indices must be non-negative")
        if np.any(np.diff(ids) < 0):
            order = np.argsort(ids, kind='stable')
            ids, y, x = ids[order], y[order], x[order]
            if self.times is not None:
                object.__setattr__(self, 'times', np.asarray(self.times)[order])
        n = int(ids.max()) + 1
        counts = np.bincount(ids, minlength=n)
        if np.any(counts == 0):
            raise DimensionMismatchError("Every individual in 0..n-1 needs at least one row")
        offsets = np.concatenate([[0], np.cumsum(counts)])

        object.__setattr__(self, 'ids', ids)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'offsets', offsets)
        if not self.labels:
            object.__setattr__(self, 'labels', tuple(str(i + 1) for i in range(n)))
        if not self.covariate_names:
            object.__setattr__(self, 'covariate_names', tuple(f"x{j + 1}" for j in range(x.shape[1])))
        if len(self.labels) != n or len(self.covariate_names) != x.shape[1]:
            raise DimensionMismatchError("labels / covariate_names do not match the panel shape")

    @property
    def n(self) -> int:
        return len(self.offsets) - 1

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def N(self) -> int:
        return self.y.size

    @property
    def t_lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def t_bar(self) -> float:
        """Mean panel length N / n, used wherever a formula needs T."""
        return self.N / self.n

    @property
    def is_balanced(self) -> bool:
        return bool(np.all(self.t_lengths == self.t_lengths[0]))

    def rows_of(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))


@dataclass(frozen=True, eq=False)
class FixedEffectsFit:
    """Fixed effects quantile regression estimates (alpha_check, beta_check)."""
    alpha: np.ndarray
    beta: np.ndarray
    objective: float
    tau: float
    report: Optional[object] = None

    @property
    def converged(self) -> bool:
        return self.report is None or self.report.converged


def check_loss(u, tau):
    """The quantile check function rho_tau(u) = u * (tau - 1{u < 0}).

    Works elementwise on arrays; returns a float for scalar input.
    """
    tau = as_tau(tau)
    u = np.asarray(u, dtype=float)
    loss = u * (tau - (u < 0))
    return float(loss) if loss.ndim == 0 else loss


def residuals(data: PanelData, alpha: Sequence[float], beta: Sequence[float]) -> np.ndarray:
    """Row-aligned residuals y_it - x_it' beta - alpha_i."""
    alpha = np.asarray(alpha, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    if alpha.size != data.n:
        raise DimensionMismatchError(f"alpha has {alpha.size} entries, panel has n={data.n}")
    if beta.size != data.p:
        raise DimensionMismatchError(f"beta has {beta.size} entries, panel has p={data.p}")
    fitted = alpha[data.ids]
    if data.p:
        fitted = fitted + data.x @ beta
    return data.y - fitted


def total_check_loss(data: PanelData, alpha, beta, tau) -> float:
    return float(np.sum(check_loss(residuals(data, alpha, beta), tau)))
