"""Point losses, expected losses under a mean-field Gaussian, and gradients.

Supported loss kinds:

    hinge            l(theta) = max(0, 1 - y <theta, x>),  y in {-1, +1}
    squared_linear   l(theta) = (y - <theta, x>)^2
    squared_nn       l(theta) = (y - f_theta(x))^2 with a one-hidden-layer
                     ReLU network; theta packs (W1, b1, w2, b2) flat.

For the two convex kinds the expected loss under N(m, diag(sigma^2)) and
its (m, sigma) gradients are in closed form; the network case has no
closed form and is served by the reparameterized Monte-Carlo estimator.

Closed forms.  The hinge margin z = 1 - y <theta, x> is univariate
Gaussian with mean mu_z = 1 - y <m, x> and variance s_z^2 = sum_j
sigma_j^2 x_j^2, so E[z_+] = mu_z Phi(mu_z/s_z) + s_z phi(mu_z/s_z).
For the squared linear loss E[l] = (y - <m, x>)^2 + sum_j sigma_j^2 x_j^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import DimensionMismatchError, DomainError, UnsupportedLossError
from .family import BoxConstraints, MeanFieldGaussian
from .rng import CounterRng

HINGE = "hinge"
SQUARED_LINEAR = "squared_linear"
SQUARED_NN = "squared_nn"

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gaussian_cdf(z):
    """Standard normal CDF via the complementary error function."""
    return 0.5 * erfc(-np.asarray(z, dtype=float) / _SQRT2)


def gaussian_pdf(z):
    z = np.asarray(z, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


@dataclass(frozen=True, eq=False)
class DataExample:
    """One observation: feature vector x and target y (label in {-1,+1} for
    classification, real for regression)."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        arr = np.array(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise DomainError("x must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)
        y = float(self.y)
        if not np.isfinite(y):
            raise DomainError("y must be finite")
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class LossKind:
    kind: str
    hidden_width: int | None = None

    def __post_init__(self):
        if self.kind not in (HINGE, SQUARED_LINEAR, SQUARED_NN):
            raise DomainError(f"unknown loss kind {self.kind!r}")
        if self.kind == SQUARED_NN:
            if self.hidden_width is None or self.hidden_width < 1:
                raise DomainError("squared_nn requires hidden_width >= 1")
        elif self.hidden_width is not None:
            raise DomainError(f"{self.kind} takes no hidden_width")

    @classmethod
    def hinge(cls) -> "LossKind":
        return cls(HINGE)

    @classmethod
    def squared_linear(cls) -> "LossKind":
        return cls(SQUARED_LINEAR)

    @classmethod
    def squared_nn(cls, hidden_width: int) -> "LossKind":
        return cls(SQUARED_NN, hidden_width)

    @property
    def convex(self) -> bool:
        return self.kind in (HINGE, SQUARED_LINEAR)

    def param_dim(self, d_in: int) -> int:
        """Parameter dimension for input dimension d_in."""
        if self.kind == SQUARED_NN:
            return self.hidden_width * (d_in + 2) + 1
        return d_in


@dataclass(frozen=True, eq=False)
class ExpectedLossGradient:
    """The pair (dLbar/dm, dLbar/dsigma) driving every variational update."""

    g_m: np.ndarray
    g_sigma: np.ndarray

    def __post_init__(self):
        for name in ("g_m", "g_sigma"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.g_m.shape != self.g_sigma.shape:
            raise DimensionMismatchError("g_m and g_sigma must have equal length")


# ---------------------------------------------------------------------------
# network packing


def _nn_unpack(theta: np.ndarray, hw: int, d_in: int):
    w1 = theta[: hw * d_in].reshape(hw, d_in)
    b1 = theta[hw * d_in: hw * d_in + hw]
    w2 = theta[hw * d_in + hw: hw * d_in + 2 * hw]
    b2 = theta[-1]
    return w1, b1, w2, b2


def _check_theta(kind: LossKind, theta: np.ndarray, d_in: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    expected = kind.param_dim(d_in)
    if theta.size != expected:
        raise DimensionMismatchError(
            f"theta has length {theta.size}, {kind.kind} with d_in={d_in} needs {expected}"
        )
    return theta


def _nn_forward(theta: np.ndarray, x: np.ndarray, hw: int):
    w1, b1, w2, b2 = _nn_unpack(theta, hw, x.size)
    pre = w1 @ x + b1
    hidden = np.maximum(pre, 0.0)
    return float(w2 @ hidden + b2), pre, hidden, w2


# ---------------------------------------------------------------------------
# point losses and subgradients


def point_loss(kind: LossKind, theta, ex: DataExample) -> float:
    theta = _check_theta(kind, theta, ex.x.size)
    if kind.kind == HINGE:
        return max(0.0, 1.0 - ex.y * float(theta @ ex.x))
    if kind.kind == SQUARED_LINEAR:
        return float((ex.y - theta @ ex.x) ** 2)
    f, _, _, _ = _nn_forward(theta, ex.x, kind.hidden_width)
    return float((ex.y - f) ** 2)


def point_grad(kind: LossKind, theta, ex: DataExample) -> np.ndarray:
    """Subgradient of the point loss at theta.

    Hinge uses the convention 1{margin > 0} (zero exactly at the kink);
    the network ReLU derivative is 0 at 0.
    """
    theta = _check_theta(kind, theta, ex.x.size)
    if kind.kind == HINGE:
        margin = 1.0 - ex.y * float(theta @ ex.x)
        if margin > 0.0:
            return -ex.y * ex.x.copy()
        return np.zeros_like(theta)
    if kind.kind == SQUARED_LINEAR:
        return -2.0 * (ex.y - float(theta @ ex.x)) * ex.x
    hw = kind.hidden_width
    f, pre, hidden, w2 = _nn_forward(theta, ex.x, hw)
    dloss = -2.0 * (ex.y - f)
    active = (pre > 0.0).astype(float)
    g_b1 = dloss * w2 * active
    grad = np.empty_like(theta)
    grad[: hw * ex.x.size] = np.outer(g_b1, ex.x).reshape(-1)
    grad[hw * ex.x.size: hw * ex.x.size + hw] = g_b1
    grad[hw * ex.x.size + hw: hw * ex.x.size + 2 * hw] = dloss * hidden
    grad[-1] = dloss
    return grad


def point_loss_many(kind: LossKind, thetas: np.ndarray, ex: DataExample) -> np.ndarray:
    """Point loss at each row of thetas (used by the expert grid and MC)."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 2 or thetas.shape[1] != kind.param_dim(ex.x.size):
        raise DimensionMismatchError("thetas must be (n, param_dim)")
    if kind.kind == HINGE:
        return np.maximum(0.0, 1.0 - ex.y * (thetas @ ex.x))
    if kind.kind == SQUARED_LINEAR:
        return (ex.y - thetas @ ex.x) ** 2
    f = _nn_forward_many(thetas, ex.x, kind.hidden_width)[0]
    return (ex.y - f) ** 2


def point_loss_series(kind: LossKind, theta, features: np.ndarray,
                      targets: np.ndarray) -> np.ndarray:
    """Point loss of a fixed theta along a stream (vectorized over rows)."""
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    theta = _check_theta(kind, theta, features.shape[1])
    if kind.kind == HINGE:
        return np.maximum(0.0, 1.0 - targets * (features @ theta))
    if kind.kind == SQUARED_LINEAR:
        return (targets - features @ theta) ** 2
    hw = kind.hidden_width
    w1, b1, w2, b2 = _nn_unpack(theta, hw, features.shape[1])
    hidden = np.maximum(features @ w1.T + b1, 0.0)
    return (targets - (hidden @ w2 + b2)) ** 2


def _nn_forward_many(thetas: np.ndarray, x: np.ndarray, hw: int):
    """Forward pass of many parameter vectors on one input."""
    n = thetas.shape[0]
    d_in = x.size
    w1 = thetas[:, : hw * d_in].reshape(n, hw, d_in)
    b1 = thetas[:, hw * d_in: hw * d_in + hw]
    w2 = thetas[:, hw * d_in + hw: hw * d_in + 2 * hw]
    b2 = thetas[:, -1]
    pre = w1 @ x + b1
    hidden = np.maximum(pre, 0.0)
    f = np.sum(w2 * hidden, axis=1) + b2
    return f, pre, hidden, w2


def _point_grad_many(kind: LossKind, thetas: np.ndarray, ex: DataExample) -> np.ndarray:
    """Per-row subgradients, stacked (n, param_dim)."""
    n = thetas.shape[0]
    if kind.kind == HINGE:
        margins = 1.0 - ex.y * (thetas @ ex.x)
        return np.where(margins[:, None] > 0.0, -ex.y * ex.x[None, :], 0.0)
    if kind.kind == SQUARED_LINEAR:
        resid = ex.y - thetas @ ex.x
        return -2.0 * resid[:, None] * ex.x[None, :]
    hw = kind.hidden_width
    d_in = ex.x.size
    f, pre, hidden, w2 = _nn_forward_many(thetas, ex.x, hw)
    dloss = -2.0 * (ex.y - f)
    g_b1 = dloss[:, None] * w2 * (pre > 0.0)
    grads = np.empty_like(thetas)
    grads[:, : hw * d_in] = (g_b1[:, :, None] * ex.x[None, None, :]).reshape(n, -1)
    grads[:, hw * d_in: hw * d_in + hw] = g_b1
    grads[:, hw * d_in + hw: hw * d_in + 2 * hw] = dloss[:, None] * hidden
    grads[:, -1] = dloss
    return grads


def nn_batch_mean_grad(kind: LossKind, theta: np.ndarray, features: np.ndarray,
                       targets: np.ndarray) -> np.ndarray:
    """Average network-loss gradient over a batch (vectorized over rows)."""
    if kind.kind != SQUARED_NN:
        raise UnsupportedLossError("nn_batch_mean_grad is for squared_nn only")
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    theta = _check_theta(kind, theta, features.shape[1])
    hw = kind.hidden_width
    n = features.shape[0]
    w1, b1, w2, b2 = _nn_unpack(theta, hw, features.shape[1])
    pre = features @ w1.T + b1                     # (n, hw)
    hidden = np.maximum(pre, 0.0)
    f = hidden @ w2 + b2
    dloss = -2.0 * (targets - f)                   # (n,)
    gate = dloss[:, None] * (pre > 0.0) * w2[None, :]   # per-row dl/db1
    grad = np.empty_like(theta)
    grad[: hw * features.shape[1]] = (gate.T @ features).reshape(-1) / n
    grad[hw * features.shape[1]: hw * features.shape[1] + hw] = gate.mean(axis=0)
    grad[hw * features.shape[1] + hw: hw * features.shape[1] + 2 * hw] = \
        (hidden * dloss[:, None]).mean(axis=0)
    grad[-1] = dloss.mean()
    return grad


# ---------------------------------------------------------------------------
# expected losses (closed form)


def _check_q(kind: LossKind, q: MeanFieldGaussian, d_in: int):
    expected = kind.param_dim(d_in)
    if q.d != expected:
        raise DimensionMismatchError(
            f"q has dimension {q.d}, {kind.kind} with d_in={d_in} needs {expected}"
        )


def expected_loss(kind: LossKind, q: MeanFieldGaussian, ex: DataExample) -> float:
    """E_{theta ~ q}[l(theta)] in closed form (convex kinds only)."""
    _check_q(kind, q, ex.x.size)
    if kind.kind == SQUARED_LINEAR:
        resid = ex.y - float(q.m @ ex.x)
        return resid * resid + float(np.sum((q.sigma * ex.x) ** 2))
    if kind.kind == HINGE:
        mu_z = 1.0 - ex.y * float(q.m @ ex.x)
        s_z = float(np.sqrt(np.sum((q.sigma * ex.x) ** 2)))
        if s_z == 0.0:
            return max(mu_z, 0.0)
        z = mu_z / s_z
        return mu_z * float(gaussian_cdf(z)) + s_z * float(gaussian_pdf(z))
    raise UnsupportedLossError(
        "squared_nn has no closed-form expected loss; use mc_expected_loss_and_grad"
    )


def expected_loss_grad(kind: LossKind, q: MeanFieldGaussian,
                       ex: DataExample) -> ExpectedLossGradient:
    """Closed-form (dLbar/dm, dLbar/dsigma) for the convex kinds."""
    _check_q(kind, q, ex.x.size)
    if kind.kind == SQUARED_LINEAR:
        resid = ex.y - float(q.m @ ex.x)
        return ExpectedLossGradient(-2.0 * resid * ex.x, 2.0 * q.sigma * ex.x ** 2)
    if kind.kind == HINGE:
        mu_z = 1.0 - ex.y * float(q.m @ ex.x)
        s_z = float(np.sqrt(np.sum((q.sigma * ex.x) ** 2)))
        if s_z == 0.0:
            indicator = 1.0 if mu_z > 0.0 else 0.0
            return ExpectedLossGradient(-ex.y * indicator * ex.x,
                                        np.zeros_like(q.sigma))
        z = mu_z / s_z
        g_m = -ex.y * float(gaussian_cdf(z)) * ex.x
        g_sigma = (q.sigma * ex.x ** 2 / s_z) * float(gaussian_pdf(z))
        return ExpectedLossGradient(g_m, g_sigma)
    raise UnsupportedLossError(
        "squared_nn has no closed-form gradient; use mc_expected_loss_and_grad"
    )


def expected_loss_series(kind: LossKind, q: MeanFieldGaussian, features: np.ndarray,
                         targets: np.ndarray) -> np.ndarray:
    """Closed-form expected loss of a fixed q along a stream (convex kinds)."""
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    _check_q(kind, q, features.shape[1])
    if kind.kind == SQUARED_LINEAR:
        resid = targets - features @ q.m
        return resid ** 2 + (features ** 2) @ (q.sigma ** 2)
    if kind.kind == HINGE:
        mu_z = 1.0 - targets * (features @ q.m)
        s_z = np.sqrt((features ** 2) @ (q.sigma ** 2))
        out = np.maximum(mu_z, 0.0)
        pos = s_z > 0.0
        z = mu_z[pos] / s_z[pos]
        out[pos] = mu_z[pos] * gaussian_cdf(z) + s_z[pos] * gaussian_pdf(z)
        return out
    raise UnsupportedLossError("squared_nn has no closed-form expected loss")


# ---------------------------------------------------------------------------
# Monte-Carlo path (reparameterization)


def mc_expected_loss_and_grad(kind: LossKind, q: MeanFieldGaussian, ex: DataExample,
                              samples: int, seed: int):
    """Reparameterized estimate of the expected loss and its (m, sigma) gradient.

    theta_s = m + sigma * eps_s with eps_s ~ N(0, I) drawn from the
    counter stream of ``seed``; the gradient estimators are

        g_m     = mean_s dl/dtheta(theta_s)
        g_sigma = mean_s dl/dtheta(theta_s) * eps_s

    Bitwise reproducible for fixed (seed, samples).
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    _check_q(kind, q, ex.x.size)
    eps = CounterRng(seed, "mc-expected-loss").normals(samples * q.d).reshape(samples, q.d)
    thetas = q.m[None, :] + q.sigma[None, :] * eps
    losses = point_loss_many(kind, thetas, ex)
    grads = _point_grad_many(kind, thetas, ex)
    estimate = float(np.mean(losses))
    g_m = grads.mean(axis=0)
    g_sigma = (grads * eps).mean(axis=0)
    return estimate, ExpectedLossGradient(g_m, g_sigma)


# ---------------------------------------------------------------------------
# Lipschitz constants


def lipschitz_constant(kind: LossKind, data, box: BoxConstraints) -> float:
    """Certified Lipschitz constant L of the expected loss, L = 2 L'.

    L' bounds the point-loss gradient norm: max_t ||x_t|| for hinge, and
    for the squared linear loss the box-corner bound
    max_t 2 ||x_t|| (|y_t| + sum_j max(|lo_j|, |hi_j|) |x_tj|).
    """
    examples = list(data)
    if not examples:
        raise DomainError("data must be nonempty")
    features = np.stack([ex.x for ex in examples])
    norms = np.linalg.norm(features, axis=1)
    if kind.kind == HINGE:
        return 2.0 * float(np.max(norms))
    if kind.kind == SQUARED_LINEAR:
        if features.shape[1] != box.d:
            raise DimensionMismatchError("box dimension must match feature dimension")
        targets = np.abs(np.array([ex.y for ex in examples]))
        corner = np.maximum(np.abs(box.m_lo), np.abs(box.m_hi))
        resid_bound = targets + np.abs(features) @ corner
        return 2.0 * float(np.max(2.0 * norms * resid_bound))
    raise UnsupportedLossError("no certified Lipschitz constant for squared_nn")
