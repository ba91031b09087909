"""Linear and MLP classifiers over a single flat parameter vector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError


@dataclass
class ModelSpec:
    kind: str = "mlp"
    input_dim: int = 2
    hidden_sizes: list = field(default_factory=list)
    num_classes: int = 2

    def __post_init__(self):
        self.hidden_sizes = [int(h) for h in self.hidden_sizes]
        if self.kind not in ("linear", "mlp"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if (self.kind == "mlp") != bool(self.hidden_sizes):
            raise ConfigError("hidden_sizes must be nonempty iff kind == 'mlp'")

    @property
    def layer_sizes(self):
        return [self.input_dim, *self.hidden_sizes, self.num_classes]

    def layout(self):
        """(weight slice, weight shape, bias slice) per layer."""
        out, lo = [], 0
        sizes = self.layer_sizes
        for a, b in zip(sizes[:-1], sizes[1:]):
            ws = slice(lo, lo + a * b)
            lo += a * b
            bs = slice(lo, lo + b)
            lo += b
            out.append((ws, (a, b), bs))
        return out

    @property
    def num_params(self):
        sizes = self.layer_sizes
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def init(self, rng):
        """He-scaled Gaussian weights, zero biases."""
        theta = np.zeros(self.num_params)
        for ws, (a, b), _ in self.layout():
            theta[ws] = rng.standard_normal(a * b) * np.sqrt(2.0 / a)
        return theta

    def __call__(self, theta, X):
        """Logits Tensor for inputs ``X`` (array or Tensor) under flat ``theta``."""
        theta = ad.as_tensor(theta)
        h = ad.as_tensor(X)
        layers = self.layout()
        for i, (ws, shape, bs) in enumerate(layers):
            W = ad.reshape(ad.getitem(theta, ws), shape)
            h = ad.add(ad.matmul(h, W), ad.getitem(theta, bs))
            if i < len(layers) - 1:
                h = ad.relu(h)
        return h

    def logits(self, theta, X):
        """Plain numpy forward pass (no graph)."""
        h = np.asarray(X, dtype=np.float64)
        layers = self.layout()
        for i, (ws, shape, bs) in enumerate(layers):
            h = h @ theta[ws].reshape(shape) + theta[bs]
            if i < len(layers) - 1:
                h = np.maximum(h, 0.0)
        return h

    def to_json(self):
        return {"kind": self.kind, "input_dim": self.input_dim,
                "hidden_sizes": list(self.hidden_sizes), "num_classes": self.num_classes}
