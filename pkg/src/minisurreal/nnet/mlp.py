"""Feed-forward networks with hand-written backpropagation.

Weights are stored as ``W`` with shape ``(fan_in, fan_out)`` so a layer
computes ``x @ W + b``.  The flat layout is layer-major: ``W1`` in
row-major (C) order, then ``b1``, then ``W2``, ``b2`` and so on, all as
little-endian float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LINEAR = "linear"
TANH = "tanh"


class ShapeError(ValueError):
    """Inputs or parameters do not match the network layout."""


@dataclass(frozen=True)
class MlpSpec:
    sizes: tuple
    output: str = LINEAR

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 3:
            raise ShapeError("need an input size, at least one hidden size and an output size")
        if any(n < 1 for n in sizes):
            raise ShapeError("layer sizes must be positive")
        if self.output not in (LINEAR, TANH):
            raise ShapeError(f"output activation must be linear or tanh, got {self.output!r}")

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    @property
    def shapes(self) -> list[tuple[tuple, tuple]]:
        return [((a, b), (b,)) for a, b in zip(self.sizes[:-1], self.sizes[1:])]

    @property
    def param_count(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))


def init_params(spec: MlpSpec, rng, scale: float = 1.0, last_scale: float = 0.01) -> list:
    """Glorot-style weights, zero biases; the last layer starts small."""
    rng = np.random.default_rng(rng)
    params = []
    layers = spec.shapes
    for i, ((fan_in, fan_out), bshape) in enumerate(layers):
        s = scale * np.sqrt(2.0 / (fan_in + fan_out))
        if i == len(layers) - 1:
            s *= last_scale
        params.append((rng.normal(0.0, s, size=(fan_in, fan_out)), np.zeros(bshape)))
    return params


def flatten(params) -> np.ndarray:
    parts = []
    for W, b in params:
        parts.append(np.ascontiguousarray(W, dtype=np.float64).ravel())
        parts.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten(spec: MlpSpec, flat) -> list:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.ndim != 1 or flat.size != spec.param_count:
        raise ShapeError(f"flat parameter vector has {flat.size} entries, expected {spec.param_count}")
    params, i = [], 0
    for wshape, bshape in spec.shapes:
        nw = wshape[0] * wshape[1]
        W = flat[i:i + nw].reshape(wshape)
        i += nw
        b = flat[i:i + bshape[0]]
        i += bshape[0]
        params.append((W, b))
    return params


def _check(spec: MlpSpec, params, x):
    if len(params) != len(spec.shapes):
        raise ShapeError(f"expected {len(spec.shapes)} layers, got {len(params)}")
    for (W, b), (ws, bs) in zip(params, spec.shapes):
        if np.shape(W) != ws or np.shape(b) != bs:
            raise ShapeError(f"layer shapes {np.shape(W)}/{np.shape(b)} do not match {ws}/{bs}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != spec.n_in:
        raise ShapeError(f"input of shape {x.shape} does not end in {spec.n_in}")
    return x


def _forward(spec, params, x):
    acts = [x]
    h = x
    last = len(params) - 1
    for i, (W, b) in enumerate(params):
        z = h @ W + b
        h = z if (i == last and spec.output == LINEAR) else np.tanh(z)
        acts.append(h)
    return acts


def forward(spec: MlpSpec, params, x) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of rows."""
    x = _check(spec, params, x)
    return _forward(spec, params, x)[-1]


def backward(spec: MlpSpec, params, x, upstream) -> tuple[list, np.ndarray]:
    """Gradients of ``sum(upstream * forward(x))`` w.r.t. params and ``x``.

    For a batch, parameter gradients are summed over rows and the input
    gradient keeps one row per input.
    """
    x = _check(spec, params, x)
    acts = _forward(spec, params, x)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != acts[-1].shape:
        raise ShapeError(f"upstream gradient shape {g.shape} != output shape {acts[-1].shape}")
    grads = [None] * len(params)
    last = len(params) - 1
    for i in range(last, -1, -1):
        W, _ = params[i]
        out = acts[i + 1]
        if not (i == last and spec.output == LINEAR):
            g = g * (1.0 - out * out)
        inp = acts[i]
        if inp.ndim == 1:
            gW = np.outer(inp, g)
            gb = g.copy()
        else:
            gW = inp.T @ g
            gb = g.sum(axis=0)
        grads[i] = (gW, gb)
        g = g @ W.T
    return grads, g
