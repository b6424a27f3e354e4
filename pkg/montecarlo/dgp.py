"""
Simulation designs with three latent groups of individual effects.

    X_it = rho * a_i + g_i + v_it
    location:        Y_it = a_i + X_it * beta + u_it
    location-scale:  Y_it = a_i + X_it * beta + (1 + X_it * gamma) * u_it

with a_i in {1, 2, 3}, g_i and v_it standard normal, u_it standard normal or
Student t with 3 degrees of freedom (not variance-standardized). Design 1 has
rho = 0, design 2 has rho = 0.5.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import norm, t as student_t

from estimation.path_grouping import GroupStructure, LambdaGrid
from panel.data import PanelData, as_tau
from panel.exceptions import ConfigError

logger = logging.getLogger(__name__)

MODELS = ('location', 'location-scale')
ERRORS = ('normal', 't3')
GROUP_VALUES = (1.0, 2.0, 3.0)
TRUE_BETA = 1.0
SCALE_GAMMA = 0.1


@dataclass(frozen=True)
class SimConfig:
    dgp: int = 1
    model: str = 'location'
    error: str = 'normal'
    n: int = 30
    t: int = 60
    tau: float = 0.5
    reps: int = 200
    seed: int = 42
    grid: LambdaGrid = field(default_factory=lambda: LambdaGrid.from_spec('0:0.35:0.005'))
    pnt_constant: float = 0.1

    def __post_init__(self):
        if self.dgp not in (1, 2):
            raise ConfigError(f"dgp must be 1 or 2, got {self.dgp}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}, got '{self.model}'")
        if self.error not in ERRORS:
            raise ConfigError(f"error must be one of {', '.join(ERRORS)}, got '{self.error}'")
        if self.n < len(GROUP_VALUES) or self.t < 1:
            raise ConfigError(f"Need n >= {len(GROUP_VALUES)} and t >= 1, got n={self.n}, t={self.t}")
        if self.reps < 1:
            raise ConfigError(f"reps must be at least 1, got {self.reps}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, 'tau', as_tau(self.tau))

    @property
    def rho(self) -> float:
        return 0.0 if self.dgp == 1 else 0.5

    @property
    def label(self) -> str:
        return f"dgp{self.dgp}-{self.model}-{self.error}-n{self.n}-T{self.t}-tau{self.tau:g}"

    def error_quantile(self, tau=None) -> float:
        tau = self.tau if tau is None else tau
        if self.error == 'normal':
            return float(norm.ppf(tau))
        return float(student_t.ppf(tau, df=3))

    def to_dict(self) -> dict:
        values = asdict(self)
        values['grid'] = list(self.grid.values)
        return values

    @classmethod
    def from_dict(cls, values: dict) -> 'SimConfig':
        values = dict(values)
        values['grid'] = LambdaGrid(tuple(values['grid']))
        return cls(**values)


class SimulatedPanel(NamedTuple):
    data: PanelData
    truth: GroupStructure
    true_beta: float


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent counter-based stream for replication ``rep``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(rep,))))


def group_sizes(n: int, k: int = len(GROUP_VALUES)) -> np.ndarray:
    """Sizes differing by at most one; the smallest-center groups take the remainder."""
    sizes = np.full(k, n // k)
    sizes[:n % k] += 1
    return sizes


def true_coefficients(config: SimConfig) -> tuple[np.ndarray, float]:
    """Group centers and slope at the configured quantile level."""
    q = config.error_quantile()
    centers = np.asarray(GROUP_VALUES) + q
    beta = TRUE_BETA + (SCALE_GAMMA * q if config.model == 'location-scale' else 0.0)
    return centers, beta


def generate_panel(config: SimConfig, rep: int) -> SimulatedPanel:
    rng = replication_rng(config.seed, rep)
    n, t = config.n, config.t
    membership = np.repeat(np.arange(len(GROUP_VALUES)), group_sizes(n))
    alpha = np.asarray(GROUP_VALUES)[membership]

    gamma_i = rng.standard_normal(n)
    v = rng.standard_normal((n, t))
    if config.error == 'normal':
        u = rng.standard_normal((n, t))
    else:
        u = rng.standard_t(3, size=(n, t))

    x = config.rho * alpha[:, None] + gamma_i[:, None] + v
    if config.model == 'location':
        y = alpha[:, None] + x * TRUE_BETA + u
    else:
        y = alpha[:, None] + x * TRUE_BETA + (1.0 + x * SCALE_GAMMA) * u

    data = PanelData(
        ids=np.repeat(np.arange(n), t),
        y=y.ravel(),
        x=x.reshape(-1, 1),
        times=np.tile(np.arange(1, t + 1), n),
        covariate_names=('x1',),
    )
    centers, beta = true_coefficients(config)
    return SimulatedPanel(data, GroupStructure(centers=centers, membership=membership), beta)
