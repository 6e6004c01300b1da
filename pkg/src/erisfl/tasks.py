"""Differentiable objectives, synthetic data, client partitioning, and
gradient estimators.

Three model families are supported, all operating on a flat parameter
vector: least-squares linear regression, binary logistic regression, and a
one-hidden-layer tanh MLP with softmax output.  Losses are means of
per-sample losses, so a dataset concatenation decomposes exactly into a
sample-weighted mean of per-client losses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._rng import TAG_DATA, TAG_INIT, stream
from .errors import ConfigError, DimensionError

LINEAR_REGRESSION = "linear-regression"
LOGISTIC_REGRESSION = "logistic-regression"
MLP = "mlp"
MODEL_KINDS = (LINEAR_REGRESSION, LOGISTIC_REGRESSION, MLP)

FULL_GRADIENT = "full-gradient"
MINIBATCH_SGD = "minibatch-sgd"
ESTIMATOR_KINDS = (FULL_GRADIENT, MINIBATCH_SGD)

_SMOOTHNESS_TOL = 1e-8
# Fixed entropy for internal deterministic starts (power iteration, MLP
# smoothness probes); independent of any run seed on purpose.
_INTERNAL_SEED = 0xE515

_MAX_PARTITION_ATTEMPTS = 100


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus aligned labels.

    ``labels`` is float for regression and integer class indices for
    classification.  ``planted`` optionally records the generating weight
    vector of a synthetic regression set so tests can evaluate the known
    minimiser.
    """

    features: np.ndarray
    labels: np.ndarray
    planted: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DimensionError("features must be a 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise DimensionError("labels must align with feature rows")
        if self.features.shape[0] < 1:
            raise ConfigError("dataset needs at least one sample")

    @property
    def num_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True)
class ModelSpec:
    """Model family and layer sizes.

    ``dims`` is ``(d,)`` for the linear models and ``(d, hidden, classes)``
    for the MLP.
    """

    kind: str
    dims: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.kind in (LINEAR_REGRESSION, LOGISTIC_REGRESSION):
            if len(self.dims) != 1 or self.dims[0] < 1:
                raise ConfigError("linear models take dims=(input_dim,)")
        else:
            if len(self.dims) != 3 or min(self.dims) < 1:
                raise ConfigError("mlp takes dims=(input_dim, hidden, classes)")
            if self.dims[1] > 32:
                raise ConfigError("mlp hidden width is capped at 32")

    @property
    def param_count(self) -> int:
        if self.kind in (LINEAR_REGRESSION, LOGISTIC_REGRESSION):
            return self.dims[0]
        d, h, c = self.dims
        return d * h + h + h * c + c


@dataclass(frozen=True)
class EstimatorSpec:
    """Gradient estimator: exact full gradient or a uniform mini-batch mean.

    ``grad_norm_bound`` (G) is optional and only feeds variance diagnostics.
    """

    kind: str = FULL_GRADIENT
    batch: int = 1
    grad_norm_bound: float | None = None

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ConfigError(f"unknown estimator kind {self.kind!r}")
        if self.kind == MINIBATCH_SGD and self.batch < 1:
            raise ConfigError("mini-batch size must be positive")


# ---------------------------------------------------------------------------
# Synthetic data and partitioning


def synth_dataset(
    kind: str,
    samples: int,
    dim: int,
    classes: int = 2,
    noise: float = 0.0,
    seed: int = 0,
) -> Dataset:
    """Generate a seeded synthetic dataset.

    ``regression``: standard-normal features, targets ``X @ w* + noise * eps``
    with the planted ``w*`` recorded on the dataset.  ``classification``:
    near-balanced Gaussian clusters, one centre per class, with per-cluster
    spread ``noise``.
    """
    if samples < 1 or dim < 1:
        raise ConfigError("samples and dim must be positive")
    rng = stream(seed, TAG_DATA)
    if kind == "regression":
        features = rng.standard_normal((samples, dim))
        w_star = rng.standard_normal(dim)
        labels = features @ w_star + noise * rng.standard_normal(samples)
        return Dataset(features, labels, planted=w_star)
    if kind == "classification":
        if classes < 2:
            raise ConfigError("classification needs at least 2 classes")
        centers = 2.0 * rng.standard_normal((classes, dim))
        labels = np.arange(samples, dtype=np.int64) % classes
        rng.shuffle(labels)
        features = centers[labels] + noise * rng.standard_normal((samples, dim))
        return Dataset(features, labels)
    raise ConfigError(f"unknown dataset kind {kind!r}")


def dirichlet_partition(data: Dataset, K: int, alpha: float, seed: int) -> list[Dataset]:
    """Split classification data across ``K`` clients with per-class
    Dirichlet(alpha) proportions.

    Smaller ``alpha`` means more heterogeneous class mixes.  The whole
    assignment is redrawn (up to 100 attempts) if any client would end up
    empty.  Partitions are disjoint and exhaustive by construction.
    """
    if K < 1:
        raise ConfigError("K must be at least 1")
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    if not np.issubdtype(data.labels.dtype, np.integer):
        raise ConfigError("dirichlet partitioning needs classification data")
    if data.num_samples < K:
        raise ConfigError(f"cannot split {data.num_samples} samples across {K} clients")
    if K == 1:
        return [data]
    rng = stream(seed, TAG_DATA, 1)
    classes = np.unique(data.labels)
    for _ in range(_MAX_PARTITION_ATTEMPTS):
        client_indices: list[list[int]] = [[] for _ in range(K)]
        for cls in classes:
            idx = np.flatnonzero(data.labels == cls)
            rng.shuffle(idx)
            proportions = rng.dirichlet(np.full(K, alpha))
            cuts = (np.cumsum(proportions) * idx.size).astype(np.int64)[:-1]
            for client, part in enumerate(np.split(idx, cuts)):
                client_indices[client].extend(part.tolist())
        if all(client_indices):
            break
    else:
        raise ConfigError(
            f"could not give every one of {K} clients a sample in "
            f"{_MAX_PARTITION_ATTEMPTS} attempts; decrease K or increase alpha"
        )
    out = []
    for part in client_indices:
        idx = np.sort(np.asarray(part, dtype=np.int64))
        out.append(Dataset(data.features[idx], data.labels[idx]))
    return out


def split_iid(data: Dataset, K: int, seed: int) -> list[Dataset]:
    """Shuffle and split into K near-equal client datasets."""
    if K < 1:
        raise ConfigError("K must be at least 1")
    if data.num_samples < K:
        raise ConfigError(f"cannot split {data.num_samples} samples across {K} clients")
    if K == 1:
        return [data]
    rng = stream(seed, TAG_DATA, 2)
    perm = rng.permutation(data.num_samples)
    out = []
    for chunk in np.array_split(perm, K):
        idx = np.sort(chunk)
        out.append(Dataset(data.features[idx], data.labels[idx]))
    return out


def concat_datasets(parts: Sequence[Dataset]) -> Dataset:
    if not parts:
        raise ConfigError("nothing to concatenate")
    return Dataset(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
    )


# ---------------------------------------------------------------------------
# Losses and gradients


def _check_params(model: ModelSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (model.param_count,):
        raise DimensionError(
            f"model expects {model.param_count} parameters, got shape {params.shape}"
        )
    return params


def _unpack_mlp(model: ModelSpec, params: np.ndarray):
    d, h, c = model.dims
    i = 0
    W1 = params[i : i + d * h].reshape(d, h)
    i += d * h
    b1 = params[i : i + h]
    i += h
    W2 = params[i : i + h * c].reshape(h, c)
    i += h * c
    b2 = params[i : i + c]
    return W1, b1, W2, b2


def _softplus(z: np.ndarray) -> np.ndarray:
    # log(1 + exp(z)) without overflow for large |z|.
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _log_softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    return z - zmax - np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))


def loss(model: ModelSpec, params: np.ndarray, data: Dataset) -> float:
    """Mean per-sample loss: half squared error, binary cross-entropy, or
    softmax cross-entropy depending on the model kind."""
    params = _check_params(model, params)
    X = data.features
    if model.kind == LINEAR_REGRESSION:
        if X.shape[1] != model.dims[0]:
            raise DimensionError("feature width does not match model input")
        r = X @ params - data.labels
        return float(0.5 * np.mean(r * r))
    if model.kind == LOGISTIC_REGRESSION:
        if X.shape[1] != model.dims[0]:
            raise DimensionError("feature width does not match model input")
        z = X @ params
        y = data.labels.astype(np.float64)
        return float(np.mean(_softplus(z) - y * z))
    W1, b1, W2, b2 = _unpack_mlp(model, params)
    if X.shape[1] != model.dims[0]:
        raise DimensionError("feature width does not match model input")
    hidden = np.tanh(X @ W1 + b1)
    logp = _log_softmax(hidden @ W2 + b2)
    return float(-np.mean(logp[np.arange(X.shape[0]), data.labels.astype(np.int64)]))


def grad(model: ModelSpec, params: np.ndarray, data: Dataset) -> np.ndarray:
    """Exact gradient of ``loss`` (analytic for the linear models, backprop
    for the MLP)."""
    params = _check_params(model, params)
    X = data.features
    S = data.num_samples
    if model.kind == LINEAR_REGRESSION:
        r = X @ params - data.labels
        return X.T @ r / S
    if model.kind == LOGISTIC_REGRESSION:
        z = X @ params
        sig = 1.0 / (1.0 + np.exp(-z))
        return X.T @ (sig - data.labels.astype(np.float64)) / S
    W1, b1, W2, b2 = _unpack_mlp(model, params)
    hidden = np.tanh(X @ W1 + b1)
    logits = hidden @ W2 + b2
    probs = np.exp(_log_softmax(logits))
    probs[np.arange(S), data.labels.astype(np.int64)] -= 1.0
    dz2 = probs / S
    dW2 = hidden.T @ dz2
    db2 = dz2.sum(axis=0)
    dhidden = dz2 @ W2.T
    dz1 = dhidden * (1.0 - hidden * hidden)
    dW1 = X.T @ dz1
    db1 = dz1.sum(axis=0)
    return np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])


def per_sample_grad_norms(model: ModelSpec, params: np.ndarray, data: Dataset) -> np.ndarray:
    """Euclidean norm of each sample's loss gradient (used for the G bound)."""
    params = _check_params(model, params)
    X = data.features
    if model.kind == LINEAR_REGRESSION:
        r = X @ params - data.labels
        return np.abs(r) * np.linalg.norm(X, axis=1)
    if model.kind == LOGISTIC_REGRESSION:
        z = X @ params
        sig = 1.0 / (1.0 + np.exp(-z))
        return np.abs(sig - data.labels.astype(np.float64)) * np.linalg.norm(X, axis=1)
    norms = np.empty(data.num_samples)
    for s in range(data.num_samples):
        sample = Dataset(X[s : s + 1], data.labels[s : s + 1])
        norms[s] = np.linalg.norm(grad(model, params, sample))
    return norms


def stochastic_grad(
    model: ModelSpec,
    params: np.ndarray,
    data: Dataset,
    est: EstimatorSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """Unbiased gradient estimate.

    ``full-gradient`` ignores ``rng`` and returns ``grad``; ``minibatch-sgd``
    draws ``batch`` sample indices uniformly without replacement and returns
    the batch-mean gradient, whose finite-population variance matches the
    ``(m - b) / (m * b)`` factor used in the analysis constants.
    """
    if est.kind == FULL_GRADIENT:
        return grad(model, params, data)
    if est.batch > data.num_samples:
        raise ConfigError(
            f"mini-batch size {est.batch} exceeds dataset size {data.num_samples}"
        )
    if est.batch == data.num_samples:
        return grad(model, params, data)
    idx = np.sort(rng.choice(data.num_samples, size=est.batch, replace=False))
    batch = Dataset(data.features[idx], data.labels[idx])
    return grad(model, params, batch)


def smoothness_estimate(model: ModelSpec, data: Dataset) -> float:
    """Gradient-Lipschitz constant of the objective.

    Exact for the linear models (top eigenvalue of ``X^T X / S`` via power
    iteration, times 1/4 for logistic).  For the MLP it is a heuristic: the
    max finite-difference gradient ratio over seeded random point pairs,
    which lower-bounds the true constant.
    """
    X = data.features
    S = data.num_samples
    if model.kind in (LINEAR_REGRESSION, LOGISTIC_REGRESSION):
        lam = _power_iteration_sym(X, S)
        return lam / 4.0 if model.kind == LOGISTIC_REGRESSION else lam
    rng = stream(_INTERNAL_SEED, TAG_INIT, 1)
    n = model.param_count
    best = 0.0
    for _ in range(32):
        x1 = rng.uniform(-0.5, 0.5, n)
        x2 = x1 + rng.standard_normal(n) * 0.1
        gap = np.linalg.norm(x1 - x2)
        if gap == 0:
            continue
        ratio = np.linalg.norm(grad(model, x1, data) - grad(model, x2, data)) / gap
        best = max(best, ratio)
    return best


def _power_iteration_sym(X: np.ndarray, S: int) -> float:
    """Top eigenvalue of (1/S) X^T X, via X matvecs."""
    rng = stream(_INTERNAL_SEED, TAG_INIT, 0)
    v = rng.standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(10_000):
        w = X.T @ (X @ v) / S
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v_next = w / norm
        lam_next = float(v_next @ (X.T @ (X @ v_next)) / S)
        if abs(lam_next - lam) <= _SMOOTHNESS_TOL * max(1.0, abs(lam_next)):
            return lam_next
        v, lam = v_next, lam_next
    return lam


def initial_params(model: ModelSpec, seed: int) -> np.ndarray:
    """Zeros for the linear models; seeded uniform(-0.5, 0.5) for the MLP."""
    if model.kind == MLP:
        return stream(seed, TAG_INIT).uniform(-0.5, 0.5, model.param_count)
    return np.zeros(model.param_count)


# ---------------------------------------------------------------------------
# CSV round trip


def save_dataset_csv(data: Dataset, path) -> None:
    """Write ``f0..f{d-1},label`` rows with a header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(data.dim)] + ["label"])
        for row, label in zip(data.features, data.labels):
            writer.writerow([repr(float(x)) for x in row] + [repr(label.item())])


def load_dataset_csv(path, kind: str = "regression") -> Dataset:
    """Read a dataset written by ``save_dataset_csv``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label":
            raise ConfigError("dataset CSV must end with a 'label' column")
        rows = list(reader)
    if not rows:
        raise ConfigError("dataset CSV has no samples")
    features = np.array([[float(x) for x in row[:-1]] for row in rows])
    if kind == "classification":
        labels = np.array([int(row[-1]) for row in rows], dtype=np.int64)
    else:
        labels = np.array([float(row[-1]) for row in rows])
    return Dataset(features, labels)
