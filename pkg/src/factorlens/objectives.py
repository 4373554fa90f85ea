"""Training objectives for the three frameworks, with analytic gradients.

All losses are single-sample reparameterized estimators, returned as the
negated objective. The partitioned and label-conditioned frameworks share
one estimator:

    E_q(z|x)[ w * (log p(x|z) - KL(q(z|x) || p(z|y)) - log q(y|z_c)) ]
        + log q_hat(y|x)

where w = q(y|z_c) / q_hat(y|x) is the importance weight at the sampled z,
q_hat is a K-sample Monte Carlo estimate, and the log density ratio
log p(z|y) - log q(z|x) has been replaced by its analytic (Rao-Blackwellized)
diagonal-Gaussian KL. The weight is treated as a constant under
differentiation unless ``stop_weight_grad=False``.

LossBreakdown satisfies ``total = reconstruction + kl + classification``
exactly; framework multipliers (importance weight, beta) are folded into
the parts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .models import (GaussianParams, ModelParams, PROB_EPS, classify_t,
                     conditional_prior_t, encode_t, decode_t, params_dtype,
                     wrap_tensors)
from .errors import ModelError, NumericalError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class LossBreakdown:
    total: float
    reconstruction: float
    kl: float
    classification: float
    importance_weight_mean: float | None = None

    def check_finite(self):
        for term in ("total", "reconstruction", "kl", "classification"):
            v = getattr(self, term)
            if not np.isfinite(v):
                raise NumericalError(term)
        return self


def gaussian_kl(q: GaussianParams, p: GaussianParams) -> float:
    """Closed-form KL(q || p) between diagonal Gaussians, summed over dims."""
    if q.mean.shape != p.mean.shape:
        raise ModelError(f"KL dimension mismatch: {q.mean.shape} vs {p.mean.shape}")
    vq, vp = q.std ** 2, p.std ** 2
    kl = np.log(p.std / q.std) + (vq + (q.mean - p.mean) ** 2) / (2.0 * vp) - 0.5
    return float(np.sum(kl))


def _kl_t(mu_q: Tensor, std_q: Tensor, mu_p: Tensor, std_p: Tensor) -> Tensor:
    """Per-item diagonal-Gaussian KL, shape (B,)."""
    d = mu_q - mu_p
    ratio = std_q / std_p
    kl = ad.log(std_p) - ad.log(std_q) \
        + (ad.square(ratio) + ad.square(d / std_p)) * 0.5 - 0.5
    return kl.sum(axis=1)


def _gaussian_loglik_t(x: Tensor, x_hat: Tensor) -> Tensor:
    """log N(x; x_hat, I) summed over pixels, shape (B,)."""
    d = x - x_hat
    n_pix = int(np.prod(x.shape[1:]))
    sq = ad.square(d).reshape(x.shape[0], n_pix).sum(axis=1)
    return sq * (-0.5) - (n_pix / 2.0) * LOG_2PI


def _bernoulli_loglik_t(y: Tensor, probs: Tensor) -> Tensor:
    """Sum over labels of log Bern(y_i; p_i); probs pre-clamped. Shape (B,)."""
    ll = y * ad.log(probs) + (1.0 - y) * ad.log(1.0 - probs)
    return ll.sum(axis=ll.ndim - 1)


def _as_image_batch(x, dtype):
    x = np.asarray(x, dtype=dtype)
    if x.ndim == 2:
        x = x[None]
    if x.ndim == 3:
        x = x[:, None]
    return x


def _as_label_batch(y, dtype):
    y = np.asarray(y, dtype=dtype)
    if y.ndim == 1:
        y = y[None]
    return y


def estimate_q_y_given_x(x, params: ModelParams, k: int, rng) -> np.ndarray:
    """Monte Carlo estimate of the per-label probabilities q(y_i=1 | x).

    Averages the latent classifier over ``k`` reparameterized posterior
    draws; the result is clamped to (eps, 1-eps). Accepts a single padded
    observation or a batch; returns (3,) or (B, 3).
    """
    if k < 1:
        raise ModelError("k must be >= 1")
    dtype = params_dtype(params)
    xb = _as_image_batch(x, dtype)
    single = xb.shape[0] == 1 and np.asarray(x).ndim == 2
    t = wrap_tensors(params)
    mu, std = encode_t(Tensor(xb), t, params.arch)
    eps = rng.standard_normal((k,) + mu.shape, dtype=dtype)
    z = mu + std * Tensor(eps)
    probs = classify_t(z, t, params.arch, params.framework)
    pbar = np.clip(probs.data.mean(axis=0), PROB_EPS, 1.0 - PROB_EPS)
    return pbar[0] if single else pbar


def _qhat_t(mu: Tensor, std: Tensor, t: dict, params: ModelParams,
            k: int, eps_k: np.ndarray) -> Tensor:
    z = mu + std * Tensor(eps_k)
    probs = classify_t(z, t, params.arch, params.framework)
    return ad.clamp(probs.mean(axis=0), PROB_EPS, 1.0 - PROB_EPS)


def _supervised_graph(x, y, params, k, rng, stop_weight_grad=True,
                      frozen_weights=None, requires_grad=False):
    """Shared ccvae/cvae estimator; returns (loss Tensor, breakdown, tensors)."""
    dtype = params_dtype(params)
    xb = _as_image_batch(x, dtype)
    yb = _as_label_batch(y, dtype)
    t = wrap_tensors(params, requires_grad=requires_grad)
    xT, yT = Tensor(xb), Tensor(yb)

    mu, std = encode_t(xT, t, params.arch)
    eps = rng.standard_normal(mu.shape, dtype=dtype)
    z = mu + std * Tensor(eps)
    eps_k = rng.standard_normal((k,) + mu.shape, dtype=dtype)

    ll = _gaussian_loglik_t(xT, decode_t(z, t, params.arch))
    mu_p, std_p = conditional_prior_t(yT, t, params.arch, params.framework)
    kl = _kl_t(mu, std, mu_p, std_p)
    log_qy_z = _bernoulli_loglik_t(yT, classify_t(z, t, params.arch, params.framework))
    log_qy_x = _bernoulli_loglik_t(yT, _qhat_t(mu, std, t, params, k, eps_k))

    if frozen_weights is not None:
        w = Tensor(np.asarray(frozen_weights, dtype=dtype))
    else:
        w = ad.exp(log_qy_z - log_qy_x)
        if stop_weight_grad:
            w = w.detach()

    rec = (w * (-1.0 * ll)).mean()
    klp = (w * kl).mean()
    cls = (w * log_qy_z - log_qy_x).mean()
    loss = rec + klp + cls
    breakdown = LossBreakdown(
        total=loss.item(), reconstruction=rec.item(), kl=klp.item(),
        classification=cls.item(),
        importance_weight_mean=float(w.data.mean()),
    ).check_finite()
    if not np.all(np.isfinite(w.data)) or np.any(w.data <= 0):
        raise NumericalError("importance_weight")
    return loss, breakdown, w.data.copy(), t


def ccvae_loss(x, y, params: ModelParams, k: int = 10, rng=None, *,
               stop_weight_grad: bool = True,
               frozen_weights=None) -> LossBreakdown:
    """Negated partitioned-framework objective for a batch (or one sample)."""
    if params.framework != "ccvae":
        raise ModelError(f"ccvae_loss called with a {params.framework} model")
    _, breakdown, _, _ = _supervised_graph(x, y, params, k, _rng(rng),
                                           stop_weight_grad, frozen_weights)
    return breakdown


def cvae_loss(x, y, params: ModelParams, k: int = 10, rng=None, *,
              stop_weight_grad: bool = True,
              frozen_weights=None) -> LossBreakdown:
    """Same estimator as ccvae_loss with the MLP prior/classifier wiring."""
    if params.framework != "cvae":
        raise ModelError(f"cvae_loss called with a {params.framework} model")
    _, breakdown, _, _ = _supervised_graph(x, y, params, k, _rng(rng),
                                           stop_weight_grad, frozen_weights)
    return breakdown


def _vae_cls_graph(x, y, params, beta, rng, requires_grad=False):
    dtype = params_dtype(params)
    xb = _as_image_batch(x, dtype)
    yb = _as_label_batch(y, dtype)
    t = wrap_tensors(params, requires_grad=requires_grad)
    xT, yT = Tensor(xb), Tensor(yb)

    mu, std = encode_t(xT, t, params.arch)
    eps = rng.standard_normal(mu.shape, dtype=dtype)
    z = mu + std * Tensor(eps)

    ll = _gaussian_loglik_t(xT, decode_t(z, t, params.arch))
    mu_p, std_p = conditional_prior_t(yT, t, params.arch, "vae_cls")
    kl = _kl_t(mu, std, mu_p, std_p)
    bce = -1.0 * _bernoulli_loglik_t(yT, classify_t(z, t, params.arch, "vae_cls"))

    rec = (-1.0 * ll).mean()
    klp = kl.mean() * beta
    cls = bce.mean()
    loss = rec + klp + cls
    breakdown = LossBreakdown(
        total=loss.item(), reconstruction=rec.item(), kl=klp.item(),
        classification=cls.item(),
    ).check_finite()
    return loss, breakdown, t


def vae_cls_loss(x, y, params: ModelParams, beta: float = 1.0,
                 rng=None) -> LossBreakdown:
    """Negated (reconstruction - beta*KL - BCE) objective for a batch."""
    if params.framework != "vae_cls":
        raise ModelError(f"vae_cls_loss called with a {params.framework} model")
    if beta <= 0:
        raise ModelError("beta must be positive")
    _, breakdown, _ = _vae_cls_graph(x, y, params, beta, _rng(rng))
    return breakdown


def loss_and_grads(x, y, params: ModelParams, rng, *, k: int = 10,
                   beta: float = 1.0, stop_weight_grad: bool = True,
                   frozen_weights=None):
    """Loss breakdown plus gradient arrays for every named parameter."""
    if params.framework == "vae_cls":
        loss, breakdown, t = _vae_cls_graph(x, y, params, beta, _rng(rng),
                                            requires_grad=True)
    else:
        loss, breakdown, _, t = _supervised_graph(
            x, y, params, k, _rng(rng), stop_weight_grad, frozen_weights,
            requires_grad=True)
    loss.backward()
    grads = {name: (t[name].grad if t[name].grad is not None
                    else np.zeros_like(arr))
             for name, arr in params.arrays.items()}
    return breakdown, grads


def _rng(rng):
    if rng is None:
        return np.random.default_rng(0)
    return rng
