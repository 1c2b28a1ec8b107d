"""Neuron and loss primitives, datasets, and mean-field prediction.

A neuron model exposes a small duck-typed surface (eval_one, eval_many,
grad_one, grad_many, grad_weighted, plus d, d_in, bound attributes) so that
estimator and Gibbs code can also run against synthetic feature maps in
tests.  Three concrete kinds are provided:

* ``tanh``: h_theta(x) = tanh(<w, x> + b), theta = (w, b) in R^{d_in + 1}
* ``scaled-tanh``: the same times a fixed output_scale
* ``tanh-scalar``: bias-free h_theta(x) = tanh(theta * x) with a genuinely
  one-dimensional parameter, used for 1D density visualization runs

All reductions over data points use fixed summation orders so results are
bit-reproducible on a given machine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, xlogy

from .errors import DataValidationError, DimensionError, DomainError

# ---- datasets ----


@dataclass(frozen=True, eq=False)
class Dataset:
    """Finite supervised sample {(x_i, y_i)}; n = 0 is the no-data mode."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if inputs.ndim != 2:
            raise DimensionError("inputs must be an n x d_in matrix")
        if targets.shape[0] != inputs.shape[0]:
            raise DimensionError(
                f"targets length {targets.shape[0]} != number of inputs {inputs.shape[0]}"
            )
        if inputs.size and not np.isfinite(inputs).all():
            raise DataValidationError("non-finite input entries")
        if targets.size and not np.isfinite(targets).all():
            raise DataValidationError("non-finite target entries")
        inputs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d_in(self) -> int:
        return self.inputs.shape[1]

    @classmethod
    def empty(cls, d_in: int) -> "Dataset":
        return cls(np.zeros((0, d_in)), np.zeros(0))


def load_dataset_csv(path) -> Dataset:
    """Read a dataset from CSV with header x0,...,x{d_in-1},y."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        names = header.split(",")
        if len(names) < 2 or names[-1] != "y" or names[:-1] != [f"x{j}" for j in range(len(names) - 1)]:
            raise DataValidationError(f"bad dataset header: {header!r}")
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    d_in = len(names) - 1
    if body.size == 0:
        return Dataset.empty(d_in)
    if body.shape[1] != d_in + 1:
        raise DataValidationError("row width does not match header")
    return Dataset(body[:, :d_in], body[:, d_in])


def save_dataset_csv(dataset: Dataset, path) -> None:
    """Write a dataset in the loader's CSV format (17 significant digits)."""
    with open(path, "w", encoding="utf-8") as fh:
        cols = [f"x{j}" for j in range(dataset.d_in)] + ["y"]
        fh.write(",".join(cols) + "\n")
        for x, y in zip(dataset.inputs, dataset.targets):
            fh.write(",".join(f"{v:.17g}" for v in x) + f",{y:.17g}\n")


# ---- neuron models ----


@dataclass(frozen=True)
class TanhAffine:
    """h_theta(x) = tanh(<w, x> + b) with theta = (w, b)."""

    d_in: int
    kind: str = field(default="tanh", init=False)

    @property
    def d(self) -> int:
        return self.d_in + 1

    @property
    def bound(self) -> float:
        return 1.0

    def eval_one(self, theta, x) -> float:
        u = float(np.dot(theta[:-1], x)) + float(theta[-1])
        return float(np.tanh(u))

    def eval_many(self, params, X) -> np.ndarray:
        u = params[:, :-1] @ X.T + params[:, -1:]
        return np.tanh(u)

    def grad_one(self, theta, x) -> np.ndarray:
        u = float(np.dot(theta[:-1], x)) + float(theta[-1])
        s = 1.0 - np.tanh(u) ** 2
        return s * np.concatenate([x, [1.0]])

    def grad_many(self, theta, X) -> np.ndarray:
        u = X @ theta[:-1] + theta[-1]
        s = 1.0 - np.tanh(u) ** 2
        out = np.empty((X.shape[0], self.d))
        out[:, :-1] = s[:, None] * X
        out[:, -1] = s
        return out

    def grad_weighted(self, params, X, w) -> np.ndarray:
        n = X.shape[0]
        t = np.tanh(params[:, :-1] @ X.T + params[:, -1:])
        a = (1.0 - t * t) * w
        out = np.empty_like(params)
        out[:, :-1] = a @ X / n
        out[:, -1] = a.sum(axis=1) / n
        return out


@dataclass(frozen=True)
class ScaledTanh:
    """TanhAffine times a fixed output_scale, so |h| <= output_scale."""

    d_in: int
    output_scale: float
    kind: str = field(default="scaled-tanh", init=False)

    def __post_init__(self):
        if not (np.isfinite(self.output_scale) and self.output_scale > 0):
            raise DomainError("output_scale must be positive and finite")

    @property
    def d(self) -> int:
        return self.d_in + 1

    @property
    def bound(self) -> float:
        return self.output_scale

    def _base(self) -> TanhAffine:
        return TanhAffine(self.d_in)

    def eval_one(self, theta, x) -> float:
        return self.output_scale * self._base().eval_one(theta, x)

    def eval_many(self, params, X) -> np.ndarray:
        return self.output_scale * self._base().eval_many(params, X)

    def grad_one(self, theta, x) -> np.ndarray:
        return self.output_scale * self._base().grad_one(theta, x)

    def grad_many(self, theta, X) -> np.ndarray:
        return self.output_scale * self._base().grad_many(theta, X)

    def grad_weighted(self, params, X, w) -> np.ndarray:
        return self._base().grad_weighted(params, X, self.output_scale * np.asarray(w))


@dataclass(frozen=True)
class TanhScalar:
    """Bias-free scalar neuron h_theta(x) = tanh(theta * x), theta in R.

    The parameter space is genuinely one dimensional, which is what the 1D
    density snapshots need.
    """

    kind: str = field(default="tanh-scalar", init=False)

    @property
    def d_in(self) -> int:
        return 1

    @property
    def d(self) -> int:
        return 1

    @property
    def bound(self) -> float:
        return 1.0

    def eval_one(self, theta, x) -> float:
        return float(np.tanh(float(theta[0]) * float(x[0])))

    def eval_many(self, params, X) -> np.ndarray:
        return np.tanh(params[:, :1] * X[:, 0][None, :])

    def grad_one(self, theta, x) -> np.ndarray:
        t = np.tanh(float(theta[0]) * float(x[0]))
        return np.array([(1.0 - t * t) * float(x[0])])

    def grad_many(self, theta, X) -> np.ndarray:
        t = np.tanh(float(theta[0]) * X[:, 0])
        return ((1.0 - t * t) * X[:, 0])[:, None]

    def grad_weighted(self, params, X, w) -> np.ndarray:
        n = X.shape[0]
        t = np.tanh(params[:, :1] * X[:, 0][None, :])
        a = (1.0 - t * t) * w
        return (a @ X[:, 0] / n)[:, None]


_NEURON_KINDS = {"tanh": TanhAffine, "scaled-tanh": ScaledTanh, "tanh-scalar": TanhScalar}


def make_neuron(kind: str, d_in: int, output_scale: float | None = None):
    """Construct a neuron model by kind name."""
    if kind == "tanh":
        return TanhAffine(d_in)
    if kind == "scaled-tanh":
        if output_scale is None:
            raise DomainError("scaled-tanh requires output_scale")
        return ScaledTanh(d_in, output_scale)
    if kind == "tanh-scalar":
        if d_in != 1:
            raise DimensionError("tanh-scalar requires d_in = 1")
        return TanhScalar()
    raise DomainError(f"unknown neuron kind {kind!r}")


# ---- losses ----


def _check_logistic_targets(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.abs(y) == 1.0):
        raise DataValidationError("logistic loss requires targets in {-1, +1}")
    return y


@dataclass(frozen=True)
class SquaredLoss:
    """l(z, y) = 0.5 (z - y)^2 with conjugate l*(g) = 0.5 g^2 + g y."""

    kind: str = field(default="squared", init=False)

    def eval(self, z, y):
        d = np.asarray(z, dtype=np.float64) - y
        return 0.5 * d * d

    def grad(self, z, y):
        return np.asarray(z, dtype=np.float64) - y

    def conjugate(self, g, y):
        g = np.asarray(g, dtype=np.float64)
        return 0.5 * g * g + g * y

    def check_domain(self, g, y) -> None:
        if not np.all(np.isfinite(g)):
            raise DomainError("non-finite dual vector")


@dataclass(frozen=True)
class LogisticLoss:
    """l(z, y) = log(1 + exp(-y z)) for y in {-1, +1}, overflow safe.

    The conjugate is the binary entropy u log u + (1 - u) log(1 - u) at
    u = -g y, defined by continuity at the endpoints.
    """

    kind: str = field(default="logistic", init=False)

    def eval(self, z, y):
        y = _check_logistic_targets(y)
        return np.logaddexp(0.0, -y * np.asarray(z, dtype=np.float64))

    def grad(self, z, y):
        y = _check_logistic_targets(y)
        return -y * expit(-y * np.asarray(z, dtype=np.float64))

    def conjugate(self, g, y):
        y = _check_logistic_targets(y)
        self.check_domain(g, y)
        u = -np.asarray(g, dtype=np.float64) * y
        return xlogy(u, u) + xlogy(1.0 - u, 1.0 - u)

    def check_domain(self, g, y) -> None:
        y = _check_logistic_targets(y)
        u = -np.asarray(g, dtype=np.float64) * y
        if np.any(u < 0.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
            raise DomainError("infeasible dual vector: -g*y outside [0, 1]")


_LOSS_KINDS = {"squared": SquaredLoss, "logistic": LogisticLoss}


def make_loss(kind: str):
    if kind not in _LOSS_KINDS:
        raise DomainError(f"unknown loss kind {kind!r}")
    return _LOSS_KINDS[kind]()


# ---- operation wrappers ----


def _check_theta_x(model, theta, x):
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if theta.shape[0] != model.d:
        raise DimensionError(f"theta has length {theta.shape[0]}, model.d = {model.d}")
    if x.shape[0] != model.d_in:
        raise DimensionError(f"x has length {x.shape[0]}, model.d_in = {model.d_in}")
    return theta, x


def neuron_eval(model, theta, x) -> float:
    """h_theta(x); |result| <= model.bound."""
    theta, x = _check_theta_x(model, theta, x)
    return model.eval_one(theta, x)


def neuron_grad(model, theta, x) -> np.ndarray:
    """Parameter gradient of h_theta(x)."""
    theta, x = _check_theta_x(model, theta, x)
    return model.grad_one(theta, x)


def predict_mean_field(ensemble, model, x) -> float:
    """h_q(x) = (1/M) sum_r h_{theta_r}(x) for the empirical ensemble."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    params = ensemble.params
    if params.shape[0] == 0:
        raise DomainError("empty ensemble has no mean-field prediction")
    if x.shape[0] != model.d_in:
        raise DimensionError(f"x has length {x.shape[0]}, model.d_in = {model.d_in}")
    return float(model.eval_many(params, x[None, :]).mean(axis=0)[0])


def predictions(ensemble, model, dataset: Dataset) -> np.ndarray:
    """h_q(x_i) for every data point, computed once and shared."""
    if dataset.n == 0:
        return np.zeros(0)
    if ensemble.params.shape[0] == 0:
        raise DomainError("empty ensemble has no mean-field prediction")
    return model.eval_many(ensemble.params, dataset.inputs).mean(axis=0)


def loss_eval(loss, z, y) -> float:
    return float(loss.eval(z, y))


def loss_grad(loss, z, y) -> float:
    return float(loss.grad(z, y))


def fenchel_conjugate(loss, g, y) -> float:
    return float(loss.conjugate(g, y))


def dual_vector(ensemble, model, loss, dataset: Dataset) -> np.ndarray:
    """g_i = d_z l(h_q(x_i), y_i); empty vector when n = 0."""
    if dataset.n == 0:
        return np.zeros(0)
    hq = predictions(ensemble, model, dataset)
    return np.asarray(loss.grad(hq, dataset.targets), dtype=np.float64)


# ---- regularity constants ----


@dataclass(frozen=True)
class RegularityConstants:
    """Bounds used by the theory formulas.

    c1 bounds |d_z l|, c2 is the Lipschitz constant of d_z l, c3 bounds the
    neuron parameter gradient, c4 its Lipschitz constant, c5 = B bounds |h|.
    For the squared loss c1 and c2 are effective constants on the reachable
    prediction range [-B, B].  unit_ball marks feature bounds taken from the
    unit-ball convention because the dataset was empty.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    unit_ball: bool = False

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "c4", "c5"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"constant {name} must be positive and finite, got {v}")


def model_constants(model, loss, dataset: Dataset) -> RegularityConstants:
    """Regularity constants for a model/loss pair on a dataset."""
    scale = getattr(model, "output_scale", 1.0)
    unit_ball = dataset.n == 0
    if isinstance(model, TanhScalar):
        feat = 1.0 if unit_ball else float(np.max(np.abs(dataset.inputs[:, 0])))
        feat = max(feat, np.finfo(float).tiny)
        c3 = feat
        c4 = 2.0 * feat * feat
    elif isinstance(model, (TanhAffine, ScaledTanh)):
        if unit_ball:
            feat = float(np.sqrt(2.0))
        else:
            norms = np.sqrt(np.einsum("ij,ij->i", dataset.inputs, dataset.inputs) + 1.0)
            feat = float(np.max(norms))
        c3 = scale * feat
        c4 = scale * 2.0 * feat * feat
    else:
        raise DomainError(f"no constants rule for model {model!r}")
    b = model.bound
    if isinstance(loss, LogisticLoss):
        c1, c2 = 1.0, 0.25
    elif isinstance(loss, SquaredLoss):
        ymax = float(np.max(np.abs(dataset.targets))) if dataset.n else 0.0
        c1 = b + ymax
        c2 = 1.0
    else:
        raise DomainError(f"no constants rule for loss {loss!r}")
    return RegularityConstants(c1=c1, c2=c2, c3=c3, c4=c4, c5=b, unit_ball=unit_ball)
