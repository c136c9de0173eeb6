"""Online update rules behind one predict-observe-update loop.

Algorithms (all over the mean-field Gaussian family unless noted):

    SVA       follow-the-regularized-leader on linearized expected losses
              with a KL-to-prior regularizer; closed form
                  m'     = m - eta s^2 g_m
                  g_acc' = g_acc + g_sigma
                  sigma' = h(eta s g_acc' / 2) * s
    SVB       per-step linearized objective regularized by KL to the
              previous approximation; closed form (projected)
                  m'     = Pi_Mm[ m - eta sigma^2 g_m ]
                  sigma' = Pi_Ms[ sigma * h(eta sigma g_sigma / 2) ]
    NGVI      natural-parameter recursion
                  lambda' = (1-beta) lambda + beta lambda_prior
                            - eta beta grad_mu,   1/beta = 1/alpha + 1/eta
    OGA       projected online gradient descent on theta (benchmark)
    OGA-EL    gradient step directly on mu = (m, sigma)
    EWA grid  multiplicative weights over a finite expert set; exact
              tempered Bayes on that support

with h(x) = sqrt(1 + x^2) - x.  Updates are pure functions from state to
state; a state is owned by exactly one run and runs are independent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatchError, DomainError, InvalidPrecisionError
from .family import (
    SIGMA_FLOOR,
    BoxConstraints,
    GaussianPrior,
    MeanFieldGaussian,
    NaturalParams,
    from_natural,
    h_map,
    project_box,
    to_natural,
)
from .losses import (
    SQUARED_NN,
    ExpectedLossGradient,
    LossKind,
    expected_loss_grad,
    mc_expected_loss_and_grad,
    point_grad,
    point_loss,
    point_loss_many,
)
from .rng import derive_seed


# ---------------------------------------------------------------------------
# step-size schedules for SVB (eta_{t,j} as a vector over coordinates)


@dataclass(frozen=True)
class FixedEta:
    eta: float

    def rate(self, t: int, sigma: np.ndarray) -> np.ndarray:
        return np.full_like(sigma, self.eta)

    def describe(self) -> str:
        return f"fixed eta={self.eta:g}"


@dataclass(frozen=True)
class InvSigmaSqrtT:
    """The experiments' default eta_{t,j} = 1 / (sigma_{t,j}^2 sqrt(t))."""

    def rate(self, t: int, sigma: np.ndarray) -> np.ndarray:
        return 1.0 / (sigma ** 2 * np.sqrt(t))

    def describe(self) -> str:
        return "eta_t = 1/(sigma_t^2 sqrt(t))"


@dataclass(frozen=True)
class Thm3ConvexSchedule:
    """eta_{t,j} = D sqrt(2) / (L sqrt(t) sigma_{t,j}^2); the m-step then
    equals m - (D sqrt(2)/(L sqrt(t))) g_m independent of sigma."""

    D: float
    L: float

    def rate(self, t: int, sigma: np.ndarray) -> np.ndarray:
        return (self.D * np.sqrt(2.0)) / (self.L * np.sqrt(t) * sigma ** 2)

    def describe(self) -> str:
        return f"eta_tj = D*sqrt(2)/(L*sqrt(t)*sigma^2), D={self.D:g}, L={self.L:g}"


@dataclass(frozen=True)
class Thm3StrongSchedule:
    """eta_{t,j} = 2 / (H t sigma_{t,j}^2) for H-strongly-convex losses."""

    H: float

    def rate(self, t: int, sigma: np.ndarray) -> np.ndarray:
        return 2.0 / (self.H * t * sigma ** 2)

    def describe(self) -> str:
        return f"eta_tj = 2/(H*t*sigma^2), H={self.H:g}"


SvbSchedule = Union[FixedEta, InvSigmaSqrtT, Thm3ConvexSchedule, Thm3StrongSchedule]


# ---------------------------------------------------------------------------
# per-algorithm configs (only the fields the algorithm uses)


@dataclass(frozen=True)
class SvaConfig:
    eta: float
    prior: GaussianPrior
    box: BoxConstraints | None = None
    project: bool = True  # False = exact-paper mode (no projection)


@dataclass(frozen=True)
class SvbConfig:
    schedule: SvbSchedule
    prior: GaussianPrior
    box: BoxConstraints | None = None


@dataclass(frozen=True)
class NgviConfig:
    eta: float
    alpha: float
    prior: GaussianPrior
    # NGVI is never projected (no lambda-space projection is defined); a box
    # here only marks trace rows that leave it.
    box: BoxConstraints | None = None
    max_step_retries: int = 10


@dataclass(frozen=True)
class OgaConfig:
    eta: float
    box: BoxConstraints | None = None


@dataclass(frozen=True)
class OgaElConfig:
    eta: float
    prior: GaussianPrior
    box: BoxConstraints | None = None


@dataclass(frozen=True, eq=False)
class EwaGridConfig:
    eta: float
    experts: np.ndarray  # (K, d)

    def __post_init__(self):
        experts = np.array(self.experts, dtype=float)
        if experts.ndim != 2 or experts.shape[0] < 1:
            raise DomainError("experts must be a nonempty (K, d) array")
        experts.setflags(write=False)
        object.__setattr__(self, "experts", experts)


LearnerConfig = Union[SvaConfig, SvbConfig, NgviConfig, OgaConfig, OgaElConfig,
                      EwaGridConfig]

ALGORITHM_TAGS = {
    SvaConfig: "sva",
    SvbConfig: "svb",
    NgviConfig: "ngvi",
    OgaConfig: "oga",
    OgaElConfig: "ogael",
    EwaGridConfig: "ewagrid",
}


def algorithm_tag(config: LearnerConfig) -> str:
    return ALGORITHM_TAGS[type(config)]


# ---------------------------------------------------------------------------
# expert grid state


@dataclass(frozen=True, eq=False)
class EwaGrid:
    """Finite expert set with log-space weights normalized to sum 1."""

    thetas: np.ndarray       # (K, d)
    log_weights: np.ndarray  # (K,)
    eta: float

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=float)
        lw = np.array(self.log_weights, dtype=float).reshape(-1)
        if thetas.ndim != 2 or thetas.shape[0] != lw.size:
            raise DimensionMismatchError("log_weights must have one entry per expert")
        if not np.all(np.isfinite(lw)):
            raise DomainError("log weights must be finite")
        thetas.setflags(write=False)
        lw.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def uniform(cls, thetas: np.ndarray, eta: float) -> "EwaGrid":
        thetas = np.asarray(thetas, dtype=float)
        k = thetas.shape[0]
        return cls(thetas, np.full(k, -np.log(k)), eta)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mean(self) -> np.ndarray:
        return self.weights() @ self.thetas


def diagonal_lattice(lo: float, hi: float, count: int, d: int) -> np.ndarray:
    """count experts a_k * (1, ..., 1) with a_k equally spaced on [lo, hi]."""
    return np.repeat(np.linspace(lo, hi, count)[:, None], d, axis=1)


def product_lattice(lo: float, hi: float, per_axis: int, d: int) -> np.ndarray:
    """Full per_axis^d lattice over the cube [lo, hi]^d."""
    axes = [np.linspace(lo, hi, per_axis)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def ewa_grid_update(grid: EwaGrid, losses: np.ndarray) -> EwaGrid:
    """Multiplicative-weights step: log w_k += -eta l_k, then renormalize.

    Log-space with logsumexp keeps this stable for eta * sum(loss) well
    past 1e6.
    """
    losses = np.asarray(losses, dtype=float).reshape(-1)
    if losses.size != grid.thetas.shape[0]:
        raise DimensionMismatchError("one loss per expert required")
    if not np.all(np.isfinite(losses)):
        raise DomainError("expert losses must be finite")
    lw = grid.log_weights - grid.eta * losses
    lw = lw - logsumexp(lw)
    return EwaGrid(grid.thetas, lw, grid.eta)


# ---------------------------------------------------------------------------
# learner state and updates


@dataclass(frozen=True, eq=False)
class LearnerState:
    """Evolving state; only the fields the algorithm needs are populated."""

    t: int
    q: MeanFieldGaussian | None = None
    accum_g_sigma: np.ndarray | None = None   # SVA running sum of g_sigma
    lam: NaturalParams | None = None           # NGVI
    theta: np.ndarray | None = None             # OGA
    grid: EwaGrid | None = None                 # grid EWA


def init_state(config: LearnerConfig) -> LearnerState:
    if isinstance(config, SvaConfig):
        return LearnerState(t=0, q=config.prior.gaussian(),
                            accum_g_sigma=np.zeros(config.prior.d))
    if isinstance(config, SvbConfig):
        return LearnerState(t=0, q=config.prior.gaussian())
    if isinstance(config, NgviConfig):
        prior = config.prior.gaussian()
        return LearnerState(t=0, q=prior, lam=to_natural(prior))
    if isinstance(config, OgaConfig):
        if config.box is None:
            raise DomainError("OGA needs a box to size theta; pass BoxConstraints")
        return LearnerState(t=0, theta=np.zeros(config.box.d))
    if isinstance(config, OgaElConfig):
        return LearnerState(t=0, q=config.prior.gaussian())
    if isinstance(config, EwaGridConfig):
        return LearnerState(t=0, grid=EwaGrid.uniform(config.experts, config.eta))
    raise DomainError(f"unknown learner config {type(config).__name__}")


def predict(state: LearnerState) -> np.ndarray:
    """The decision theta_hat: posterior mean for distributions, theta for OGA,
    and the weighted expert average for the grid."""
    if state.grid is not None:
        return state.grid.mean()
    if state.theta is not None:
        return state.theta.copy()
    if state.q is not None:
        return state.q.m.copy()
    raise DomainError("uninitialized learner state")


def sva_update(state: LearnerState, grad: ExpectedLossGradient,
               config: SvaConfig) -> LearnerState:
    s = config.prior.s
    m = state.q.m - config.eta * s * s * grad.g_m
    accum = state.accum_g_sigma + grad.g_sigma
    sigma = s * h_map(0.5 * config.eta * s * accum)
    q = MeanFieldGaussian(m, sigma)
    if config.box is not None and config.project:
        q = project_box(q, config.box)
    return replace(state, t=state.t + 1, q=q, accum_g_sigma=accum)


def svb_update(state: LearnerState, grad: ExpectedLossGradient,
               config: SvbConfig) -> LearnerState:
    t = state.t + 1
    sigma = state.q.sigma
    eta = config.schedule.rate(t, sigma)
    m = state.q.m - eta * sigma ** 2 * grad.g_m
    sigma_new = sigma * h_map(0.5 * eta * sigma * grad.g_sigma)
    q = MeanFieldGaussian(m, sigma_new)
    if config.box is not None:
        q = project_box(q, config.box)
    return replace(state, t=t, q=q)


def grad_to_expectation_coords(grad: ExpectedLossGradient,
                               q: MeanFieldGaussian) -> tuple[np.ndarray, np.ndarray]:
    """Chain rule from (m, sigma) gradients to expectation coordinates
    (mu1, mu2) = (m, m^2 + sigma^2):

        g_var = g_sigma / (2 sigma)
        dL/dmu1 = g_m - 2 m g_var,   dL/dmu2 = g_var
    """
    if grad.g_m.size != q.d:
        raise DimensionMismatchError("gradient dimension must match q")
    if np.any(q.sigma <= 0.0):
        raise DomainError("sigma must be positive")
    g_var = grad.g_sigma / (2.0 * q.sigma)
    return grad.g_m - 2.0 * q.m * g_var, g_var


def ngvi_update(state: LearnerState, grad_mu: tuple[np.ndarray, np.ndarray],
                config: NgviConfig) -> LearnerState:
    """Natural-parameter recursion; on a step that would push lambda2 >= 0
    the effective eta is halved for that step only (up to
    ``max_step_retries`` times) before aborting."""
    g_mu1, g_mu2 = grad_mu
    lam_prior = config.prior.natural()
    step = state.t + 1
    eta = config.eta
    for _ in range(config.max_step_retries + 1):
        beta = 1.0 / (1.0 / config.alpha + 1.0 / eta)
        l1 = (1.0 - beta) * state.lam.lambda1 + beta * lam_prior.lambda1 - eta * beta * g_mu1
        l2 = (1.0 - beta) * state.lam.lambda2 + beta * lam_prior.lambda2 - eta * beta * g_mu2
        if np.all(l2 < 0.0):
            lam = NaturalParams(l1, l2)
            return replace(state, t=step, q=from_natural(lam), lam=lam)
        eta *= 0.5
    raise InvalidPrecisionError(
        f"NGVI step {step} left the family (lambda2 >= 0) after "
        f"{config.max_step_retries} eta halvings",
        step=step,
    )


def oga_update(state: LearnerState, g: np.ndarray, config: OgaConfig) -> LearnerState:
    theta = state.theta - config.eta * np.asarray(g, dtype=float)
    if config.box is not None:
        theta = np.clip(theta, config.box.m_lo, config.box.m_hi)
    return replace(state, t=state.t + 1, theta=theta)


def ogael_update(state: LearnerState, grad: ExpectedLossGradient,
                 config: OgaElConfig) -> LearnerState:
    m = state.q.m - config.eta * grad.g_m
    sigma = state.q.sigma - config.eta * grad.g_sigma
    sigma = np.maximum(sigma, SIGMA_FLOOR)
    q = MeanFieldGaussian(m, sigma)
    if config.box is not None:
        q = project_box(q, config.box)
    return replace(state, t=state.t + 1, q=q)


# ---------------------------------------------------------------------------
# the online loop


@dataclass(frozen=True, eq=False)
class Trace:
    """Per-step record of one online run (arrays indexed by step, 0-based)."""

    predictions: np.ndarray            # (T, d_pred)
    losses: np.ndarray                 # (T,)
    states: tuple[LearnerState, ...]   # post-update snapshots
    in_box: np.ndarray | None = None   # per-step box membership, if tracked
    expert_losses: np.ndarray | None = None  # (T, K) for the expert grid

    @property
    def horizon(self) -> int:
        return self.losses.size


def _as_examples(stream) -> list[DataExample]:
    if hasattr(stream, "examples"):
        return list(stream.examples())
    return list(stream)


def run_online(config: LearnerConfig, stream, kind: LossKind, *,
               horizon: int | None = None, mc_samples: int = 32,
               seed: int = 0) -> Trace:
    """Run one algorithm over a stream: predict, suffer the point loss at the
    prediction, compute the gradient object the algorithm needs, update.

    Deterministic given (config, stream, seed); the Monte-Carlo seed at step
    t is ``derive_seed(seed, t)`` so that all algorithms run under the same
    experiment seed share random numbers step by step.
    """
    examples = _as_examples(stream)
    if horizon is not None:
        examples = examples[:horizon]
    t_max = len(examples)

    state = init_state(config)
    d_pred = (config.experts.shape[1] if isinstance(config, EwaGridConfig)
              else (state.theta.size if state.theta is not None else state.q.d))
    predictions = np.zeros((t_max, d_pred))
    losses = np.zeros(t_max)
    states: list[LearnerState] = []
    track_box = getattr(config, "box", None) is not None
    in_box = np.zeros(t_max, dtype=bool) if track_box else None
    expert_losses = (np.zeros((t_max, config.experts.shape[0]))
                     if isinstance(config, EwaGridConfig) else None)
    needs_mc = kind.kind == SQUARED_NN

    for i, ex in enumerate(examples):
        step = i + 1
        theta_hat = predict(state)
        predictions[i] = theta_hat
        losses[i] = point_loss(kind, theta_hat, ex)

        if isinstance(config, EwaGridConfig):
            grid_losses = point_loss_many(kind, state.grid.thetas, ex)
            expert_losses[i] = grid_losses
            state = replace(state, t=step, grid=ewa_grid_update(state.grid, grid_losses))
        elif isinstance(config, OgaConfig):
            state = oga_update(state, point_grad(kind, state.theta, ex), config)
        else:
            if needs_mc:
                _, grad = mc_expected_loss_and_grad(
                    kind, state.q, ex, mc_samples, derive_seed(seed, step))
            else:
                grad = expected_loss_grad(kind, state.q, ex)
            if isinstance(config, SvaConfig):
                state = sva_update(state, grad, config)
            elif isinstance(config, SvbConfig):
                state = svb_update(state, grad, config)
            elif isinstance(config, NgviConfig):
                state = ngvi_update(state, grad_to_expectation_coords(grad, state.q), config)
            elif isinstance(config, OgaElConfig):
                state = ogael_update(state, grad, config)
            else:
                raise DomainError(f"unknown learner config {type(config).__name__}")

        states.append(state)
        if track_box:
            if state.q is not None:
                in_box[i] = config.box.contains(state.q)
            elif state.theta is not None:
                in_box[i] = bool(np.all(state.theta >= config.box.m_lo)
                                 and np.all(state.theta <= config.box.m_hi))

    return Trace(predictions=predictions, losses=losses, states=tuple(states),
                 in_box=in_box, expert_losses=expert_losses)


def unrolled_natural_params(config: NgviConfig,
                            grads_mu: Sequence[tuple[np.ndarray, np.ndarray]]) -> NaturalParams:
    """Direct geometric-weight summation equivalent to the NGVI recursion:

        lambda_{t+1} = lambda_1 - eta * sum_i  beta (1-beta)^{t-i} grad_i

    Kept as an independent oracle for the recursion.
    """
    beta = 1.0 / (1.0 / config.alpha + 1.0 / config.eta)
    lam = config.prior.natural()
    t = len(grads_mu)
    l1 = lam.lambda1.astype(float).copy()
    l2 = lam.lambda2.astype(float).copy()
    for i, (g1, g2) in enumerate(grads_mu, start=1):
        w = beta * (1.0 - beta) ** (t - i)
        l1 -= config.eta * w * g1
        l2 -= config.eta * w * g2
    return NaturalParams(l1, l2)
