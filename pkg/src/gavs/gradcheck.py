"""Central finite-difference gradient oracle and the verification suite.

The oracle is the project's primary correctness check: every differentiable
op, and the full training loss, must agree with central differences to a
relative error of 1e-4 in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import MLP, Attention, BottleneckAdapter, LayerNorm, Linear
from .tensor import Parameter, no_grad

DEFAULT_EPS = 1e-5
REL_TOL = 1e-4


def finite_diff_gradcheck(f, params, eps: float = DEFAULT_EPS) -> float:
    """Max relative error between AD and central-difference gradients.

    ``f`` must rebuild its graph from the current parameter values on each
    call and return a scalar Tensor. Relative error per coordinate is
    |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
    """
    for p in params:
        p.grad = None
    loss = f()
    loss.backward()
    ad_grads = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    max_rel = 0.0
    for p, g_ad in zip(params, ad_grads):
        flat = p.data.reshape(-1)
        g_flat = g_ad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                up = f().item()
            flat[i] = orig - eps
            with no_grad():
                down = f().item()
            flat[i] = orig
            g_fd = (up - down) / (2.0 * eps)
            rel = abs(g_flat[i] - g_fd) / max(1e-8, abs(g_flat[i]) + abs(g_fd))
            if rel > max_rel:
                max_rel = rel
    return max_rel


@dataclass
class CheckResult:
    name: str
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= REL_TOL


def _param(rng, shape):
    return Parameter(rng.uniform(-1.0, 1.0, size=shape))


def _op_checks(rng):
    checks = []

    a = _param(rng, (3, 4))
    b = _param(rng, (4, 2))
    checks.append(("matmul", lambda: T.matmul(a, b).sum(), [a, b]))

    ab = _param(rng, (2, 3, 4))
    bb = _param(rng, (2, 4, 3))
    checks.append(("matmul_batched", lambda: T.matmul(ab, bb).sum(), [ab, bb]))

    s = _param(rng, (3, 5))
    checks.append(
        ("softmax", lambda: (T.softmax(s, axis=-1) * T.softmax(s, axis=-1)).sum(), [s])
    )

    x = _param(rng, (4, 6))
    ln = LayerNorm(6)
    checks.append(
        (
            "layer_norm",
            lambda: (ln(x) * ln(x)).sum(),
            [x, ln.gain, ln.bias],
        )
    )

    g = _param(rng, (3, 4))
    checks.append(("gelu", lambda: (T.gelu(g) * T.gelu(g)).sum(), [g]))

    r = _param(rng, (3, 4))
    checks.append(("relu", lambda: (T.relu(r) * r).sum(), [r]))

    sg = _param(rng, (3, 4))
    checks.append(("sigmoid", lambda: (T.sigmoid(sg) * sg).sum(), [sg]))

    cx = _param(rng, (2, 3, 3))
    ck = _param(rng, (2, 3, 2, 2))
    checks.append(
        (
            "conv_transpose2d",
            lambda: (T.conv_transpose2d(cx, ck) * T.conv_transpose2d(cx, ck)).sum(),
            [cx, ck],
        )
    )

    bl = _param(rng, (4, 4))
    target = (rng.uniform(size=(4, 4)) > 0.5).astype(float)
    checks.append(("bce_with_logits", lambda: T.bce_with_logits(bl, target), [bl]))

    va = _param(rng, (6,))
    vb = _param(rng, (6,))
    checks.append(("cosine_similarity", lambda: T.cosine_similarity(va, vb), [va, vb]))

    cc1 = _param(rng, (3,))
    cc2 = _param(rng, (4,))
    checks.append(
        ("concat", lambda: (T.concat([cc1, cc2]) * T.concat([cc1, cc2])).sum(), [cc1, cc2])
    )

    gi = _param(rng, (5, 3))
    checks.append(("getitem", lambda: (gi[1] * gi[1]).sum() + gi[3].sum(), [gi]))

    rng_attn = np.random.default_rng(rng.integers(2**32))
    attn = Attention(8, 2, rng_attn)
    qs = _param(rng, (3, 8))
    ks = _param(rng, (5, 8))
    checks.append(
        (
            "attention_block",
            lambda: (attn(qs, ks) * attn(qs, ks)).sum(),
            [qs, ks] + attn.parameters(),
        )
    )

    rng_ad = np.random.default_rng(rng.integers(2**32))
    adapter = BottleneckAdapter(6, 3, rng_ad)
    for p in adapter.parameters():
        p.data[...] = rng.uniform(-1.0, 1.0, size=p.shape)
    ah = _param(rng, (4, 6))
    checks.append(
        (
            "bottleneck_adapter",
            lambda: (adapter(ah) * adapter(ah)).sum(),
            [ah] + adapter.parameters(),
        )
    )

    rng_mlp = np.random.default_rng(rng.integers(2**32))
    mlp = MLP([5, 7, 4], rng_mlp)
    mx = _param(rng, (3, 5))
    checks.append(
        ("mlp", lambda: (mlp(mx) * mlp(mx)).sum(), [mx] + mlp.parameters())
    )

    return checks


def run_op_checks(seed: int = 0) -> list[CheckResult]:
    """Gradcheck every differentiable op on random inputs in [-1, 1]."""
    rng = np.random.default_rng(seed)
    results = []
    for name, f, params in _op_checks(rng):
        results.append(CheckResult(name, finite_diff_gradcheck(f, params)))
    return results


def run_model_check(seed: int = 0) -> CheckResult:
    """Gradcheck the full training loss on a tiny model, all parameters.

    Parameters are re-randomized first: zero-initialized adapter
    up-projections would otherwise zero out genuine gradients and leave the
    finite-difference quotient comparing rounding noise against itself.
    """
    from .config import RunConfig
    from .model import SoundingSceneModel
    from .training import LossConfig, batch_loss

    cfg = RunConfig.gradcheck_default()
    rng = np.random.default_rng(seed)
    model = SoundingSceneModel(cfg, n_classes=4, rng=np.random.default_rng(seed + 1))
    params = model.parameters()
    for p in params:
        p.data[...] = rng.uniform(-0.5, 0.5, size=p.shape)
        p.requires_grad = True

    n_px = cfg.encoder.image_size
    batch = []
    for _ in range(2):
        frame = rng.uniform(0.0, 1.0, size=(3, n_px, n_px))
        audio = rng.uniform(-1.0, 1.0, size=model.audio_dim_in)
        mask = (rng.uniform(size=(n_px, n_px)) > 0.7).astype(float)
        batch.append((frame, audio, mask))

    loss_cfg = LossConfig(margin=0.5, weight=0.5, batch_size=len(batch))

    def f():
        total, _, _ = batch_loss(model, batch, loss_cfg)
        return total

    return CheckResult("full_model_loss", finite_diff_gradcheck(f, params))


def run_suite(seed: int = 0, include_model: bool = True) -> list[CheckResult]:
    results = run_op_checks(seed)
    if include_model:
        results.append(run_model_check(seed))
    return results
