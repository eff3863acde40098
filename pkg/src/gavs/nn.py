"""Small module system and the layers shared by encoder and decoder."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Parameter, Tensor, gelu, layer_norm, matmul, relu, softmax


class Module:
    """Container tracking Parameters and sub-Modules by attribute order."""

    def named_parameters(self, prefix: str = ""):
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}" if prefix else attr
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix: str = ""):
        """Bake dotted path names into all parameters; names must be unique."""
        seen = set()
        for name, p in self.named_parameters(prefix=prefix):
            if name in seen:
                raise ValueError(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


_ACTIVATIONS = {"gelu": gelu, "relu": relu, "none": lambda t: t}


class Linear(Module):
    """Affine map x @ W + b with W of shape (d_in, d_out)."""

    def __init__(self, d_in, d_out, rng, bias=True, zero_init=False):
        self.d_in = d_in
        self.d_out = d_out
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = glorot_uniform(rng, d_in, d_out, (d_in, d_out))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 1
        if squeeze:
            x = x.reshape(1, self.d_in)
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        if squeeze:
            out = out.reshape(self.d_out)
        return out


class MLP(Module):
    """Stack of Linear layers with an activation between (not after) them."""

    def __init__(self, dims, rng, activation="gelu"):
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        self.act = activation

    def __call__(self, x: Tensor) -> Tensor:
        act = _ACTIVATIONS[self.act]
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = act(x)
        return x


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, eps=self.eps)


class BottleneckAdapter(Module):
    """Down-project, activate, up-project; zero-init up makes it an identity.

    ``delta()`` returns just the correction term, ``__call__`` adds the
    residual.
    """

    def __init__(self, dim, rank, rng, activation="relu"):
        self.down = Linear(dim, rank, rng)
        self.up = Linear(rank, dim, rng, zero_init=True)
        self.act = activation

    def delta(self, h: Tensor) -> Tensor:
        return self.up(_ACTIVATIONS[self.act](self.down(h)))

    def __call__(self, h: Tensor) -> Tensor:
        return h + self.delta(h)


class Attention(Module):
    """Multi-head attention; queries from one token set, keys/values from another."""

    def __init__(self, dim, n_heads, rng):
        if dim % n_heads != 0:
            raise ValueError(f"dim {dim} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q = Linear(dim, dim, rng)
        # key bias would add a row-constant to the scores, which softmax
        # cancels exactly; it would be an untrainable dead parameter
        self.k = Linear(dim, dim, rng, bias=False)
        self.v = Linear(dim, dim, rng)
        self.o = Linear(dim, dim, rng)

    def __call__(self, query_set: Tensor, kv_set: Tensor) -> Tensor:
        nq = query_set.shape[0]
        nk = kv_set.shape[0]
        h, hd = self.n_heads, self.head_dim
        q = self.q(query_set).reshape(nq, h, hd).transpose(1, 0, 2)
        k = self.k(kv_set).reshape(nk, h, hd).transpose(1, 0, 2)
        v = self.v(kv_set).reshape(nk, h, hd).transpose(1, 0, 2)
        scores = matmul(q, k.transpose(0, 2, 1)) * (1.0 / math.sqrt(hd))
        attn = softmax(scores, axis=-1)
        out = matmul(attn, v).transpose(1, 0, 2).reshape(nq, h * hd)
        return self.o(out)
