"""Fully connected network, reverse-mode gradients and Adamax training."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dvf.linalg import NumericalError
from dvf.loss import ProblemSystem, discrete_error, loss_and_gradient


class NonFiniteLossError(NumericalError):
    def __init__(self, epoch: int, param_norm: float):
        super().__init__(f"non-finite loss at epoch {epoch} (parameter norm {param_norm:.3e})")
        self.epoch = epoch
        self.param_norm = param_norm


ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
}


class Mlp:
    """``sizes = (2, w1, ..., wk, out)``; tanh on hidden layers, identity output.

    Parameters are held as ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
    ``(fan_in, fan_out)``.
    """

    def __init__(self, sizes, seed: int = 0, activation: str = "tanh"):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = sizes
        self.activation = activation
        self.seed = seed
        rng = np.random.default_rng(seed)
        params = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / (n_in + n_out))
            params.append(rng.uniform(-lim, lim, (n_in, n_out)))
            params.append(np.zeros(n_out))
        self.params = params

    @classmethod
    def for_problem(cls, sys: ProblemSystem, hidden=(128, 128), seed: int = 0) -> Mlp:
        return cls((2, *hidden, sys.ncomponents), seed=seed)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        out, k = [], 0
        for p in self.params:
            out.append(flat[k : k + p.size].reshape(p.shape).copy())
            k += p.size
        self.params = out

    def copy(self) -> Mlp:
        other = Mlp.__new__(Mlp)
        other.sizes, other.activation, other.seed = self.sizes, self.activation, self.seed
        other.params = [p.copy() for p in self.params]
        return other

    def __call__(self, points) -> np.ndarray:
        return forward(self, points)


def forward(net: Mlp, points, return_cache: bool = False):
    """Outputs of shape ``(K, out)`` for ``(K, 2)`` points."""
    act = ACTIVATIONS[net.activation][0]
    a = np.asarray(points, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.sizes[0]:
        raise ValueError(f"points of shape {a.shape}, expected (K, {net.sizes[0]})")
    cache = [a]
    L = net.n_layers
    for layer in range(L):
        W, b = net.params[2 * layer], net.params[2 * layer + 1]
        z = a @ W + b
        a = act(z) if layer < L - 1 else z
        cache.append(a)
    return (a, cache) if return_cache else a


def backward(net: Mlp, points, cotangent, cache=None) -> list[np.ndarray]:
    """Gradients of ``sum(forward(points) * cotangent)`` for every parameter."""
    if cache is None:
        _, cache = forward(net, points, return_cache=True)
    dact = ACTIVATIONS[net.activation][1]
    g = np.asarray(cotangent, dtype=np.float64)
    if g.shape != cache[-1].shape:
        raise ValueError(f"cotangent of shape {g.shape}, expected {cache[-1].shape}")
    grads = [None] * len(net.params)
    for layer in reversed(range(net.n_layers)):
        if layer < net.n_layers - 1:
            g = g * dact(cache[layer + 1])
        grads[2 * layer] = cache[layer].T @ g
        grads[2 * layer + 1] = g.sum(axis=0)
        if layer:
            g = g @ net.params[2 * layer].T
    return grads


def grid_points(grid) -> np.ndarray:
    """``(K, 2)`` coordinates in dof order (x index outer)."""
    return grid.points.reshape(2, -1).T


def tabulate_dofs(net: Mlp, grid) -> np.ndarray:
    """Network outputs at all grid points as a component-major dof vector."""
    return forward(net, grid_points(grid)).T.ravel()


def dof_cotangent(grad_dofs: np.ndarray, n_out: int) -> np.ndarray:
    """Inverse layout of :func:`tabulate_dofs` for a dof-space gradient."""
    return np.asarray(grad_dofs).reshape(n_out, -1).T


@dataclass
class AdamaxState:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    u: list = field(default_factory=list)


def adamax_step(state: AdamaxState, params, grads) -> list[np.ndarray]:
    if len(params) != len(grads):
        raise ValueError("parameter and gradient lists differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.u = [np.zeros_like(p) for p in params]
    state.t += 1
    step = state.lr / (1.0 - state.beta1**state.t)
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"gradient of shape {g.shape} for parameter of shape {p.shape}")
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.u[k] = np.maximum(state.beta2 * state.u[k], np.abs(g))
        out.append(p - step * state.m[k] / (state.u[k] + state.eps))
    return out


TRACE_COLUMNS = ("epoch", "loss", "sqrt_loss", "err_discrete", "err_exact", "best_err")


@dataclass
class TrainResult:
    trace: list[dict]
    best_params: list[np.ndarray] | None
    best_loss: float
    best_epoch: int


def train(
    sys: ProblemSystem,
    net: Mlp,
    epochs: int,
    state: AdamaxState | None = None,
    callback=None,
) -> TrainResult:
    """Adamax on the robust loss; ``net`` ends with its final parameters.

    Each trace row holds the loss, the trial-norm distance to the discrete
    solution and, when a reference exists, the relative composite error.
    The parameters of lowest loss seen are returned as ``best_params``.
    """
    from dvf.problems import error_metrics

    if net.sizes[-1] != sys.ncomponents:
        raise ValueError(f"network has {net.sizes[-1]} outputs, problem needs {sys.ncomponents}")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    state = AdamaxState() if state is None else state
    points = grid_points(sys.grid)
    has_ref = sys.reference is not None
    trace = []
    best_loss, best_epoch, best_params = np.inf, -1, None
    best_err = np.inf
    for epoch in range(epochs):
        out, cache = forward(net, points, return_cache=True)
        v = out.T.ravel()
        loss, g = loss_and_gradient(sys, v)
        if not np.isfinite(loss):
            raise NonFiniteLossError(epoch, float(np.linalg.norm(net.flat_params())))
        err_d = discrete_error(sys, v)
        err_x = error_metrics(sys, v)["composite"] if has_ref else float("nan")
        best_err = min(best_err, err_x if has_ref else err_d)
        row = dict(
            epoch=epoch,
            loss=loss,
            sqrt_loss=float(np.sqrt(loss)),
            err_discrete=err_d,
            err_exact=err_x,
            best_err=best_err,
        )
        trace.append(row)
        if loss < best_loss:
            best_loss, best_epoch = loss, epoch
            best_params = [p.copy() for p in net.params]
        if callback is not None:
            callback(row)
        grads = backward(net, points, dof_cotangent(g, net.sizes[-1]), cache)
        net.params = adamax_step(state, net.params, grads)
    return TrainResult(trace, best_params, float(best_loss), best_epoch)


# Parameter files: u64 LE header length, JSON header, float64 LE data


def save_params(net: Mlp, path) -> None:
    header = json.dumps(
        {"sizes": list(net.sizes), "activation": net.activation, "seed": net.seed}, sort_keys=True
    ).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(net.flat_params().astype("<f8").tobytes())


def load_params(path) -> Mlp:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError("parameter file is truncated")
    (n,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8 : 8 + n].decode())
    net = Mlp(header["sizes"], seed=header.get("seed", 0), activation=header["activation"])
    data = np.frombuffer(raw[8 + n :], dtype="<f8")
    if data.size != net.n_params:
        raise ValueError(f"parameter file holds {data.size} values, expected {net.n_params}")
    net.set_flat_params(data.astype(np.float64))
    return net
