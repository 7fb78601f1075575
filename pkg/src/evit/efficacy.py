"""Dirichlet regression from similarity to prediction-quality rates.

A 1-8-8-4 softplus perceptron maps a similarity score to the concentration
parameters of a Dirichlet distribution over (TR, FPR, FNR, FDR). Training
minimises the Dirichlet negative log-likelihood plus a hinge penalty on
non-monotone predicted means over a similarity grid and a penalty on the
magnitude of the concentrations over the same grid.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import digamma, expit, gammaln

from evit.errors import ConfigError, InvalidInputError, TrainingDivergedError

LAYER_SIZES = (1, 8, 8, 4)
QUALITY_NAMES = ("tr", "fpr", "fnr", "fdr")
BOUNDARY_EPS = 1e-6

# +1: TR should not fall as similarity grows; -1: error rates should not rise
_MONO_SIGN = np.array([1.0, -1.0, -1.0, -1.0])


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 5000
    lambda_mono: float = 1.0
    lambda_conc: float = 1e-3
    grid_points: int = 101
    final_lr_fraction: float = 1e-2

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate", "must be positive")
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError("epochs", "must be an integer >= 1")
        if self.lambda_mono < 0:
            raise ConfigError("lambda_mono", "must be non-negative")
        if self.lambda_conc < 0:
            raise ConfigError("lambda_conc", "must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1", "Adam decay rates must lie in [0, 1)")
        if not self.eps > 0:
            raise ConfigError("eps", "must be positive")
        if not isinstance(self.grid_points, int) or self.grid_points < 2:
            raise ConfigError("grid_points", "must be an integer >= 2")
        if not 0 < self.final_lr_fraction <= 1:
            raise ConfigError("final_lr_fraction", "must lie in (0, 1]")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_points)

    def learning_rate_at(self, epoch: int) -> float:
        """Cosine decay from ``learning_rate`` to ``final_lr_fraction * learning_rate``."""
        lo = self.final_lr_fraction
        return self.learning_rate * (lo + (1 - lo) * 0.5 * (1 + np.cos(np.pi * epoch / self.epochs)))


class MlpModel:
    """Weights ``W[i]`` have shape (fan_out, fan_in); biases ``b[i]`` shape (fan_out,)."""

    def __init__(self, weights, biases):
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (LAYER_SIZES[i + 1], LAYER_SIZES[i])
            if w.shape != expected or b.shape != (expected[0],):
                raise InvalidInputError(f"layer {i}: expected weight shape {expected}")
        for arr in (*self.weights, *self.biases):
            arr.setflags(write=False)

    @classmethod
    def initialise(cls, seed) -> "MlpModel":
        rng = np.random.default_rng(seed)
        weights = [
            rng.uniform(-0.5, 0.5, size=(LAYER_SIZES[i + 1], LAYER_SIZES[i]))
            for i in range(len(LAYER_SIZES) - 1)
        ]
        biases = [np.zeros(n) for n in LAYER_SIZES[1:]]
        return cls(weights, biases)

    @classmethod
    def zeros(cls) -> "MlpModel":
        return cls.from_vector(np.zeros(n_parameters()))

    def to_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, theta) -> "MlpModel":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (n_parameters(),):
            raise InvalidInputError(f"expected {n_parameters()} parameters")
        weights, biases = [], []
        pos = 0
        for fan_in, fan_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
            weights.append(theta[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in))
            pos += fan_in * fan_out
            biases.append(theta[pos : pos + fan_out])
            pos += fan_out
        return cls(weights, biases)

    def alpha(self, similarity) -> np.ndarray:
        """Concentrations for a scalar (shape (4,)) or a batch (shape (n, 4))."""
        x = np.asarray(similarity, dtype=float)
        out = _forward(self, x.reshape(-1))[0]
        return out[0] if x.ndim == 0 else out

    def to_json(self, config: TrainConfig | None = None) -> str:
        payload = {
            "layer_sizes": list(LAYER_SIZES),
            "activation": "softplus",
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "config": asdict(config) if config is not None else None,
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        d = json.loads(text)
        if tuple(d.get("layer_sizes", ())) != LAYER_SIZES:
            raise InvalidInputError(f"model JSON must describe layer sizes {list(LAYER_SIZES)}")
        return cls(d["weights"], d["biases"])


def n_parameters() -> int:
    return sum(i * o + o for i, o in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]))


def _forward(model: MlpModel, x: np.ndarray):
    a_in = x[:, None]
    pre, post = [], [a_in]
    h = a_in
    for w, b in zip(model.weights, model.biases):
        a = h @ w.T + b
        h = softplus(a)
        pre.append(a)
        post.append(h)
    return h, pre, post


def _backward(model: MlpModel, pre, post, grad_out) -> np.ndarray:
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    g = grad_out
    for i in reversed(range(len(model.weights))):
        delta = g * expit(pre[i])
        grads_w[i] = delta.T @ post[i]
        grads_b[i] = delta.sum(axis=0)
        g = delta @ model.weights[i]
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts += [gw.ravel(), gb]
    return np.concatenate(parts)


def forward(model: MlpModel, similarity: float) -> np.ndarray:
    if not np.isfinite(similarity):
        raise InvalidInputError("similarity must be finite")
    return model.alpha(float(similarity))


def clamp_to_interior(q, eps: float = BOUNDARY_EPS) -> np.ndarray:
    """Lift zero components to ``eps`` and renormalise onto the simplex."""
    q = np.maximum(np.asarray(q, dtype=float), eps)
    return q / q.sum(axis=-1, keepdims=True)


def dirichlet_log_pdf(q, alpha) -> float:
    q = clamp_to_interior(q)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (4,) or np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise InvalidInputError("alpha must be four positive finite values")
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum() + np.dot(alpha - 1.0, np.log(q)))


def dirichlet_mean(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return alpha / alpha.sum(axis=-1, keepdims=True)


def _as_arrays(records):
    """Accept TransferRecords or (similarity, q) pairs."""
    sims, qs = [], []
    for r in records:
        if hasattr(r, "similarity"):
            sims.append(r.similarity)
            qs.append(tuple(r.quality))
        else:
            sims.append(r[0])
            qs.append(tuple(r[1]))
    if not sims:
        raise InvalidInputError("need at least one record")
    return np.array(sims, dtype=float), np.array(qs, dtype=float)


def loss_terms(model: MlpModel, sims, qs, cfg: TrainConfig, with_grad=False):
    """Return ``(nll, mono, conc)`` unweighted, plus the gradient of the weighted sum."""
    grid = cfg.grid
    n = len(sims)
    x = np.concatenate([sims, grid])
    alpha, pre, post = _forward(model, x)
    a_rec, a_grid = alpha[:n], alpha[n:]

    log_q = np.log(clamp_to_interior(qs))
    s_rec = a_rec.sum(axis=1)
    nll = -np.sum(gammaln(s_rec) - gammaln(a_rec).sum(axis=1) + np.sum((a_rec - 1.0) * log_q, axis=1))

    s_grid = a_grid.sum(axis=1, keepdims=True)
    mean = a_grid / s_grid
    # positive where a component moves the wrong way between neighbouring grid points
    viol = -_MONO_SIGN * (mean[1:] - mean[:-1])
    mono = np.sum(np.maximum(viol, 0.0))

    norms = np.linalg.norm(a_grid, axis=1)
    conc = norms.mean()

    if not with_grad:
        return nll, mono, conc, None

    g_rec = -(digamma(s_rec)[:, None] - digamma(a_rec) + log_q)

    active = (viol > 0).astype(float) * (-_MONO_SIGN)
    g_mean = np.zeros_like(mean)
    g_mean[1:] += active
    g_mean[:-1] -= active
    g_mean *= cfg.lambda_mono
    g_grid = (g_mean - np.sum(g_mean * mean, axis=1, keepdims=True)) / s_grid
    g_grid += cfg.lambda_conc * a_grid / norms[:, None] / len(grid)

    grad = _backward(model, pre, post, np.vstack([g_rec, g_grid]))
    return nll, mono, conc, grad


def loss(model: MlpModel, records, cfg: TrainConfig) -> float:
    sims, qs = _as_arrays(records)
    nll, mono, conc, _ = loss_terms(model, sims, qs, cfg)
    return float(nll + cfg.lambda_mono * mono + cfg.lambda_conc * conc)


def loss_and_grad(model: MlpModel, records, cfg: TrainConfig):
    sims, qs = _as_arrays(records)
    nll, mono, conc, grad = loss_terms(model, sims, qs, cfg, with_grad=True)
    return float(nll + cfg.lambda_mono * mono + cfg.lambda_conc * conc), grad


def train(records, cfg: TrainConfig) -> MlpModel:
    """Full-batch Adam with a cosine-annealed step; returns the lowest-loss parameters seen.

    The hinge penalty is not differentiable at its kinks, and a constant step
    keeps hopping across them; annealing lets the iterates settle.
    """
    sims, qs = _as_arrays(records)
    if len(sims) < 4 or len(np.unique(sims)) < 2:
        raise InvalidInputError("training needs at least 4 records with 2 distinct similarities")
    if not np.all(np.isfinite(sims)) or not np.all(np.isfinite(qs)):
        raise InvalidInputError("records must be finite")

    theta = MlpModel.initialise(cfg.seed).to_vector()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best_theta, best_loss = theta.copy(), np.inf

    def evaluate(th):
        nll, mono, conc, grad = loss_terms(MlpModel.from_vector(th), sims, qs, cfg, with_grad=True)
        return nll + cfg.lambda_mono * mono + cfg.lambda_conc * conc, grad

    for epoch in range(cfg.epochs):
        value, grad = evaluate(theta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(epoch, value)
        if value < best_loss:
            best_theta, best_loss = theta.copy(), value
        m = cfg.beta1 * m + (1 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1 - cfg.beta2) * grad**2
        m_hat = m / (1 - cfg.beta1 ** (epoch + 1))
        v_hat = v / (1 - cfg.beta2 ** (epoch + 1))
        theta = theta - cfg.learning_rate_at(epoch) * m_hat / (np.sqrt(v_hat) + cfg.eps)

    value, _ = evaluate(theta)
    if np.isfinite(value) and value < best_loss:
        best_theta = theta
    return MlpModel.from_vector(best_theta)


def sample_quality(alpha, n_samples: int, rng) -> np.ndarray:
    """Dirichlet draws via normalised independent Gamma variates, shape (n, 4)."""
    g = rng.gamma(np.asarray(alpha, dtype=float), size=(n_samples, len(alpha)))
    return g / g.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class QualityPrediction:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def predict_with_ci(model, similarity, n_samples: int = 10_000, level: float = 0.90, seed=0) -> QualityPrediction:
    """Analytic mean and empirical central interval of each quality rate.

    ``model`` may also be a length-4 concentration vector.
    """
    if not 0 < level < 1:
        raise InvalidInputError("level must lie in (0, 1)")
    alpha = np.asarray(model, dtype=float) if not isinstance(model, MlpModel) else forward(model, similarity)
    rng = np.random.default_rng(seed)
    samples = sample_quality(alpha, n_samples, rng)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [tail, 1.0 - tail], axis=0)
    return QualityPrediction(dirichlet_mean(alpha), lo, hi)


CURVE_HEADER = ("sigma",) + tuple(f"{p}_{q}" for q in QUALITY_NAMES for p in ("mean", "lo", "hi"))


def prediction_curve(model: MlpModel, grid, n_samples=10_000, level=0.90, seed=0) -> list[tuple]:
    ss = np.random.SeedSequence(seed)
    rows = []
    for sigma, child in zip(grid, ss.spawn(len(grid))):
        pred = predict_with_ci(model, sigma, n_samples=n_samples, level=level, seed=child)
        row = [float(sigma)]
        for k in range(4):
            row += [pred.mean[k], pred.lower[k], pred.upper[k]]
        rows.append(tuple(float(v) for v in row))
    return rows


def curve_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for row in rows:
        writer.writerow([repr(v) for v in row])
    return buf.getvalue()
