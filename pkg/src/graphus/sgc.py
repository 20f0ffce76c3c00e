"""SGC: k-step feature diffusion followed by L2-regularized multinomial logistic regression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from graphus.graph import Graph, normalized_adjacency
from graphus.logspace import logsumexp

__all__ = ["SgcConfig", "SgcModel", "diffuse", "fit", "objective", "logits", "predict_proba", "energy_score"]

# above this many parameters the Newton system is too large; use L-BFGS
NEWTON_MAX_PARAMS = 1500


@dataclass(frozen=True)
class SgcConfig:
    diffusion_steps: int = 2
    l2_weight: float = 1.0
    class_balanced: bool = True
    solver_tolerance: float = 1e-6
    max_solver_iterations: int = 1000
    energy_temperature: float = 1.0

    def __post_init__(self):
        if self.diffusion_steps < 0:
            raise ValueError("diffusion_steps must be >= 0")
        if self.l2_weight < 0:
            raise ValueError("l2_weight must be >= 0")
        if self.energy_temperature <= 0:
            raise ValueError("energy_temperature must be positive")


@dataclass(frozen=True, eq=False)
class SgcModel:
    """Fitted weights. Classes absent from the training labels get zero
    probability; their weight columns are kept at zero."""

    weights: np.ndarray
    bias: np.ndarray
    present: np.ndarray
    converged: bool
    iterations: int

    @property
    def num_classes(self) -> int:
        return len(self.bias)


def diffuse(g: Graph, k: int) -> np.ndarray:
    """S^k X with S the self-loop-augmented symmetric normalized adjacency."""
    if k < 0:
        raise ValueError("k must be >= 0")
    X = np.array(g.features, dtype=np.float64)
    if k == 0:
        return X
    S = normalized_adjacency(g)
    for _ in range(k):
        X = S @ X
    return np.asarray(X)


def _lse_rows(z):
    m = z.max(axis=1)
    return m + np.log(np.exp(z - m[:, None]).sum(axis=1))


def _sample_weights(y, K, balanced):
    if not balanced:
        return np.ones(len(y))
    counts = np.bincount(y, minlength=K).astype(np.float64)
    return (len(y) / (K * counts))[y]


def _unpack(theta, d, K):
    T = theta.reshape(d + 1, K)
    return T[:d], T[d]


def _loss_grad(theta, Xa, Y, w, lam, d, K, with_hessian=False):
    T = theta.reshape(d + 1, K)
    z = Xa @ T
    lse = _lse_rows(z)
    P = np.exp(z - lse[:, None])
    W = T[:d]
    f = float(w @ (lse - (z * Y).sum(axis=1))) + 0.5 * lam * float((W * W).sum())
    G = Xa.T @ (w[:, None] * (P - Y))
    G[:d] += lam * W
    if not with_hessian:
        return f, G.ravel()
    n, D = Xa.shape
    P_dim = D * K
    # sum_i w_i x_i x_i^T kron (diag(p_i) - p_i p_i^T), laid out as [(a, k), (b, l)]
    xx = (w[:, None, None] * Xa[:, :, None] * Xa[:, None, :]).reshape(n, D * D)
    pp = (P[:, :, None] * np.eye(K)[None] - P[:, :, None] * P[:, None, :]).reshape(n, K * K)
    H = (xx.T @ pp).reshape(D, D, K, K).transpose(0, 2, 1, 3).reshape(P_dim, P_dim)
    H[np.arange(d * K), np.arange(d * K)] += lam
    return f, G.ravel(), H


def _center(theta, d, K):
    # softmax is invariant to a common shift of all class columns
    T = theta.reshape(d + 1, K)
    return (T - T.mean(axis=1, keepdims=True)).ravel()


def _newton(theta, Xa, Y, w, lam, d, K, tol, max_iter):
    P_dim = theta.size
    for it in range(max_iter + 1):
        f, g, H = _loss_grad(theta, Xa, Y, w, lam, d, K, with_hessian=True)
        if np.linalg.norm(g) <= tol:
            return theta, True, it
        if it == max_iter:
            break
        ridge = 1e-10 * max(1.0, float(np.abs(np.diag(H)).max()))
        try:
            step = np.linalg.solve(H + ridge * np.eye(P_dim), -g)
        except np.linalg.LinAlgError:
            step = -g
        slope = float(g @ step)
        if slope >= 0:
            step, slope = -g, -float(g @ g)
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            if _loss_grad(cand, Xa, Y, w, lam, d, K)[0] <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return theta, False, it
        theta = _center(cand, d, K)
    return theta, False, max_iter


def _lbfgs(theta, Xa, Y, w, lam, d, K, tol, max_iter):
    # L-BFGS-B tests the largest gradient component; scale so the 2-norm test holds too
    gtol = tol / np.sqrt(theta.size)
    used = 0
    for _ in range(5):
        res = minimize(
            _loss_grad, theta, args=(Xa, Y, w, lam, d, K), jac=True, method="L-BFGS-B",
            options={"gtol": gtol, "ftol": 0.0, "maxiter": max_iter - used, "maxcor": 20},
        )
        theta = _center(res.x, d, K)
        used += int(res.nit)
        g = _loss_grad(theta, Xa, Y, w, lam, d, K)[1]
        # a restart discards the curvature pairs that stalled the line search
        if np.linalg.norm(g) <= tol or used >= max_iter or res.nit == 0:
            break
    return theta, bool(np.linalg.norm(g) <= tol), used


def objective(model: SgcModel, diffused, train_idx, train_labels, cfg: SgcConfig):
    """(objective value, gradient wrt the present-class parameters) of a fitted model."""
    Xa, Y, w, present = _design(diffused, train_idx, train_labels, model.num_classes, cfg)
    d, K = Xa.shape[1] - 1, len(present)
    theta = np.vstack([model.weights[:, present], model.bias[present][None, :]]).ravel()
    return _loss_grad(theta, Xa, Y, w, cfg.l2_weight, d, K)


def _design(diffused, train_idx, train_labels, num_classes, cfg):
    X = np.asarray(diffused, dtype=np.float64)[np.asarray(train_idx, dtype=np.int64)]
    labels = np.asarray(train_labels, dtype=np.int64)
    present = np.flatnonzero(np.bincount(labels, minlength=num_classes) > 0)
    remap = np.full(num_classes, -1)
    remap[present] = np.arange(len(present))
    y = remap[labels]
    K = len(present)
    Y = np.zeros((len(y), K))
    Y[np.arange(len(y)), y] = 1.0
    w = _sample_weights(y, K, cfg.class_balanced)
    Xa = np.hstack([X, np.ones((len(y), 1))])
    return Xa, Y, w, present


def fit(diffused, train_idx, train_labels, num_classes: int, cfg: SgcConfig | None = None) -> SgcModel:
    """Minimize class-weighted cross-entropy + (l2_weight / 2) ||W||^2 over the training rows.

    Starts from zero parameters, so the result is a deterministic function of
    the inputs. The bias is not regularized.
    """
    cfg = cfg or SgcConfig()
    if len(train_idx) == 0:
        raise ValueError("cannot fit without labeled nodes")
    if len(train_idx) != len(train_labels):
        raise ValueError("train_idx and train_labels differ in length")
    Xa, Y, w, present = _design(diffused, train_idx, train_labels, num_classes, cfg)
    d, K = Xa.shape[1] - 1, len(present)
    weights = np.zeros((d, num_classes))
    bias = np.zeros(num_classes)
    mask = np.zeros(num_classes, dtype=bool)
    mask[present] = True
    if K == 1:
        return SgcModel(weights, bias, mask, True, 0)
    theta0 = np.zeros((d + 1) * K)
    solver = _newton if theta0.size <= NEWTON_MAX_PARAMS else _lbfgs
    theta, converged, iters = solver(
        theta0, Xa, Y, w, cfg.l2_weight, d, K, cfg.solver_tolerance, cfg.max_solver_iterations
    )
    W, b = _unpack(theta, d, K)
    weights[:, present] = W
    bias[present] = b
    return SgcModel(weights, bias, mask, converged, iters)


def logits(model: SgcModel, diffused) -> np.ndarray:
    z = np.asarray(diffused) @ model.weights + model.bias
    return np.where(model.present[None, :], z, -np.inf)


def predict_proba(model: SgcModel, diffused) -> np.ndarray:
    z = logits(model, diffused)
    return np.exp(z - logsumexp(z, axis=1, keepdims=True))


def energy_score(model: SgcModel, diffused, i=None, temperature: float = 1.0):
    """-temperature * log sum_c exp(logit_c); all nodes when ``i`` is None."""
    z = logits(model, diffused if i is None else np.asarray(diffused)[[i]])
    u = -temperature * logsumexp(z, axis=1)
    return u if i is None else float(u[0])
