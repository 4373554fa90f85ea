"""Parametric components of the three frameworks.

Components are pure functions of (inputs, params); stochasticity enters only
through explicit noise arguments. The latent space is fixed at 5 dimensions.
For the label-partitioned framework ('ccvae') dims 0-2 form the
characteristic part, bound one-to-one to (listening, schizophrenia,
hallucinations), and dims 3-4 are shared.

Frameworks:
  ccvae    label-bound latent partition, elementwise linear conditional
           prior over dims 0-2, per-dimension sigmoid classifier
  cvae     all 5 dims conditioned on labels through an MLP prior, MLP
           classifier over the full latent
  vae_cls  standard normal prior plus a downstream MLP classifier
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import IncompatibilityError, ModelError

FRAMEWORKS = ("ccvae", "cvae", "vae_cls")

PROB_EPS = 1e-7      # probabilities clamped to (PROB_EPS, 1 - PROB_EPS)
STD_FLOOR = 1e-4     # floor added to softplus std heads

CHECKPOINT_META = "params.json"


@dataclass(frozen=True)
class Architecture:
    """Shape bookkeeping for the conv encoder/decoder stack.

    The default mirrors the production setup: 64x64 single-channel inputs,
    four stride-2 5x5 conv stages with channels 1-8-16-16-8 (so the flattened
    feature length is 8*4*4 = 128), mirrored transposed-conv decoder, and
    width-32 hidden layers for the MLP heads. Tests use a reduced variant.
    """

    input_hw: int = 64
    enc_channels: tuple = (1, 8, 16, 16, 8)
    dec_channels: tuple = (8, 16, 16, 8, 1)
    kernel: int = 5
    stride: int = 2
    pad: int = 2
    latent_dim: int = 5
    label_dim: int = 3
    char_dims: tuple = (0, 1, 2)
    mlp_hidden: int = 32

    def __post_init__(self):
        n = self.n_stages
        if self.input_hw % (2 ** n) != 0:
            raise ModelError(f"input size {self.input_hw} not divisible by 2^{n}")
        if self.dec_channels[0] != self.enc_channels[-1] or \
                self.dec_channels[-1] != self.enc_channels[0]:
            raise ModelError("decoder channels must mirror encoder channels")
        if tuple(self.char_dims) != tuple(range(len(self.char_dims))):
            raise ModelError("characteristic dims must be the leading latent dims")

    @property
    def n_stages(self) -> int:
        return len(self.enc_channels) - 1

    @property
    def feat_hw(self) -> int:
        return self.input_hw // (2 ** self.n_stages)

    @property
    def flat_dim(self) -> int:
        return self.enc_channels[-1] * self.feat_hw ** 2

    @property
    def n_char(self) -> int:
        return len(self.char_dims)

    @property
    def n_shared(self) -> int:
        return self.latent_dim - self.n_char


DEFAULT_ARCH = Architecture()


@dataclass
class GaussianParams:
    """Mean/std pair of a diagonal Gaussian; std strictly positive."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean)
        self.std = np.asarray(self.std)
        if self.mean.shape != self.std.shape:
            raise ModelError("mean and std must have identical shapes")
        if not np.all(self.std > 0):
            raise ModelError("std must be strictly positive")


@dataclass
class ModelParams:
    """Named parameter arrays plus the framework/architecture they belong to."""

    framework: str
    arch: Architecture
    arrays: dict = field(default_factory=dict)

    def architecture_hash(self) -> str:
        spec = {
            "framework": self.framework,
            "arch": asdict(self.arch),
            "shapes": {k: list(v.shape) for k, v in self.arrays.items()},
        }
        blob = json.dumps(spec, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def copy(self) -> "ModelParams":
        return ModelParams(self.framework, self.arch,
                           {k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.framework, self.arch,
                           {k: v.astype(dtype) for k, v in self.arrays.items()})


def _uniform_fanin(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(framework: str, arch: Architecture = DEFAULT_ARCH,
                seed: int = 0, dtype=np.float32) -> ModelParams:
    """Initialize all parameter arrays for a framework.

    Uniform fan-in scaling everywhere, except the elementwise conditional
    prior (w=2, b=-1, mapping label 0/1 to latent means -1/+1) and the
    diagonal classifier (scale 1, bias 0).
    """
    if framework not in FRAMEWORKS:
        raise ModelError(f"unknown framework {framework!r}")
    rng = np.random.default_rng([int(seed), 0x1A17])
    k, st = arch.kernel, arch.stride
    p: dict[str, np.ndarray] = {}

    for i in range(arch.n_stages):
        ci, co = arch.enc_channels[i], arch.enc_channels[i + 1]
        p[f"enc.conv{i}.w"] = _uniform_fanin(rng, (co, ci, k, k), ci * k * k, dtype)
        p[f"enc.conv{i}.b"] = _uniform_fanin(rng, (co,), ci * k * k, dtype)
    for head in ("mean", "std"):
        p[f"enc.{head}.w"] = _uniform_fanin(
            rng, (arch.flat_dim, arch.latent_dim), arch.flat_dim, dtype)
        p[f"enc.{head}.b"] = _uniform_fanin(
            rng, (arch.latent_dim,), arch.flat_dim, dtype)

    p["dec.fc.w"] = _uniform_fanin(
        rng, (arch.latent_dim, arch.flat_dim), arch.latent_dim, dtype)
    p["dec.fc.b"] = _uniform_fanin(rng, (arch.flat_dim,), arch.latent_dim, dtype)
    for i in range(arch.n_stages):
        ci, co = arch.dec_channels[i], arch.dec_channels[i + 1]
        p[f"dec.convt{i}.w"] = _uniform_fanin(rng, (ci, co, k, k), ci * k * k, dtype)
        p[f"dec.convt{i}.b"] = _uniform_fanin(rng, (co,), ci * k * k, dtype)

    nc, nl, hid = arch.n_char, arch.label_dim, arch.mlp_hidden
    if framework == "ccvae":
        p["prior.w"] = np.full(nl, 2.0, dtype=dtype)
        p["prior.b"] = np.full(nl, -1.0, dtype=dtype)
        p["cls.scale"] = np.ones(nc, dtype=dtype)
        p["cls.bias"] = np.zeros(nc, dtype=dtype)
    elif framework == "cvae":
        p["prior.fc0.w"] = _uniform_fanin(rng, (nl, hid), nl, dtype)
        p["prior.fc0.b"] = _uniform_fanin(rng, (hid,), nl, dtype)
        for head in ("mean", "std"):
            p[f"prior.{head}.w"] = _uniform_fanin(
                rng, (hid, arch.latent_dim), hid, dtype)
            p[f"prior.{head}.b"] = _uniform_fanin(
                rng, (arch.latent_dim,), hid, dtype)
        p["cls.fc0.w"] = _uniform_fanin(rng, (arch.latent_dim, hid), arch.latent_dim, dtype)
        p["cls.fc0.b"] = _uniform_fanin(rng, (hid,), arch.latent_dim, dtype)
        p["cls.out.w"] = _uniform_fanin(rng, (hid, nl), hid, dtype)
        p["cls.out.b"] = _uniform_fanin(rng, (nl,), hid, dtype)
    else:  # vae_cls: downstream classifier only
        p["cls.fc0.w"] = _uniform_fanin(rng, (arch.latent_dim, hid), arch.latent_dim, dtype)
        p["cls.fc0.b"] = _uniform_fanin(rng, (hid,), arch.latent_dim, dtype)
        p["cls.out.w"] = _uniform_fanin(rng, (hid, nl), hid, dtype)
        p["cls.out.b"] = _uniform_fanin(rng, (nl,), hid, dtype)

    return ModelParams(framework, arch, p)


def wrap_tensors(params: ModelParams, requires_grad: bool = False) -> dict:
    return {k: Tensor(v, requires_grad=requires_grad)
            for k, v in params.arrays.items()}


# -- tensor-level forwards (batched) -----------------------------------


def encode_t(x: Tensor, t: dict, arch: Architecture):
    """x: (B, 1, H, W) -> (mean, std) Tensors of shape (B, latent_dim)."""
    if x.shape[2] != arch.input_hw or x.shape[3] != arch.input_hw:
        raise ModelError(f"encoder expects {arch.input_hw}x{arch.input_hw} inputs, "
                         f"got {x.shape[2]}x{x.shape[3]}")
    h = x
    for i in range(arch.n_stages):
        h = ad.conv2d(h, t[f"enc.conv{i}.w"], arch.stride, arch.pad)
        h = ad.relu(h + t[f"enc.conv{i}.b"].reshape(1, -1, 1, 1))
    flat = h.reshape(h.shape[0], arch.flat_dim)
    mean = flat @ t["enc.mean.w"] + t["enc.mean.b"]
    std = ad.softplus(flat @ t["enc.std.w"] + t["enc.std.b"]) + STD_FLOOR
    return mean, std


def decode_t(z: Tensor, t: dict, arch: Architecture) -> Tensor:
    """z: (B, latent_dim) -> reconstruction mean (B, 1, H, W); final layer linear."""
    if z.shape[-1] != arch.latent_dim:
        raise ModelError(f"decoder expects {arch.latent_dim}-dim latents, "
                         f"got {z.shape[-1]}")
    h = ad.relu(z @ t["dec.fc.w"] + t["dec.fc.b"])
    hw = arch.feat_hw
    h = h.reshape(h.shape[0], arch.dec_channels[0], hw, hw)
    for i in range(arch.n_stages):
        hw *= 2
        h = ad.conv_transpose2d(h, t[f"dec.convt{i}.w"], arch.stride, arch.pad, (hw, hw))
        h = h + t[f"dec.convt{i}.b"].reshape(1, -1, 1, 1)
        if i < arch.n_stages - 1:
            h = ad.relu(h)
    return h


def conditional_prior_t(y: Tensor, t: dict, arch: Architecture, framework: str):
    """y: (B, label_dim) -> (mean, std) Tensors over the full latent space."""
    b = y.shape[0]
    dtype = y.dtype
    if framework == "ccvae":
        mean_c = y * t["prior.w"] + t["prior.b"]
        zeros = Tensor(np.zeros((b, arch.n_shared), dtype=dtype))
        mean = ad.concat([mean_c, zeros], axis=1)
        std = Tensor(np.ones((b, arch.latent_dim), dtype=dtype))
        return mean, std
    if framework == "cvae":
        h = ad.relu(y @ t["prior.fc0.w"] + t["prior.fc0.b"])
        mean = h @ t["prior.mean.w"] + t["prior.mean.b"]
        std = ad.softplus(h @ t["prior.std.w"] + t["prior.std.b"]) + STD_FLOOR
        return mean, std
    if framework == "vae_cls":
        mean = Tensor(np.zeros((b, arch.latent_dim), dtype=dtype))
        std = Tensor(np.ones((b, arch.latent_dim), dtype=dtype))
        return mean, std
    raise ModelError(f"unknown framework {framework!r}")


def classify_t(z: Tensor, t: dict, arch: Architecture, framework: str) -> Tensor:
    """Per-label probabilities, clamped to (eps, 1-eps).

    ccvae reads only the characteristic dims through a diagonal affine map,
    so label i sees latent i alone; cvae and vae_cls run an MLP over the
    full latent. Accepts (..., latent_dim) and returns (..., label_dim).
    """
    if framework == "ccvae":
        zc = ad.narrow(z, z.ndim - 1, 0, arch.n_char) \
            if z.shape[-1] == arch.latent_dim else z
        logits = zc * t["cls.scale"] + t["cls.bias"]
    else:
        lead = z.shape[:-1]
        flat = z.reshape(-1, z.shape[-1]) if z.ndim != 2 else z
        h = ad.relu(flat @ t["cls.fc0.w"] + t["cls.fc0.b"])
        logits = h @ t["cls.out.w"] + t["cls.out.b"]
        if z.ndim != 2:
            logits = logits.reshape(*lead, arch.label_dim)
    return ad.clamp(ad.sigmoid(logits), PROB_EPS, 1.0 - PROB_EPS)


# -- public single/batch numpy API --------------------------------------


def _as_batch_images(x: np.ndarray, arch: Architecture):
    x = np.asarray(x)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ModelError(f"expected (H, W) or (B, H, W) input, got shape {x.shape}")
    return x[:, None, :, :], single


def encode(x: np.ndarray, params: ModelParams) -> GaussianParams:
    """Posterior parameters for a padded observation (or batch of them)."""
    xb, single = _as_batch_images(x, params.arch)
    t = wrap_tensors(params)
    mean, std = encode_t(Tensor(xb.astype(params_dtype(params))), t, params.arch)
    if single:
        return GaussianParams(mean.data[0], std.data[0])
    return GaussianParams(mean.data, std.data)


def decode(z: np.ndarray, params: ModelParams) -> np.ndarray:
    """Observation mean for a latent code (or batch); returns (H, W) or (B, H, W)."""
    z = np.asarray(z)
    single = z.ndim == 1
    zb = z[None] if single else z
    t = wrap_tensors(params)
    out = decode_t(Tensor(zb.astype(params_dtype(params))), t, params.arch)
    imgs = out.data[:, 0]
    return imgs[0] if single else imgs


def conditional_prior(y: np.ndarray, params: ModelParams) -> GaussianParams:
    """Prior over the latent space given labels (single label vector or batch)."""
    y = np.asarray(y, dtype=params_dtype(params))
    single = y.ndim == 1
    yb = y[None] if single else y
    t = wrap_tensors(params)
    mean, std = conditional_prior_t(Tensor(yb), t, params.arch, params.framework)
    if single:
        return GaussianParams(mean.data[0], std.data[0])
    return GaussianParams(mean.data, std.data)


def classify_latent(z_c: np.ndarray, params: ModelParams) -> np.ndarray:
    """Diagonal-affine sigmoid classifier over the characteristic dims (ccvae)."""
    if params.framework != "ccvae":
        raise ModelError("classify_latent is the ccvae classifier; "
                         "use classify_latent_mlp for other frameworks")
    z_c = np.asarray(z_c, dtype=params_dtype(params))
    single = z_c.ndim == 1
    zb = z_c[None] if single else z_c
    if zb.shape[-1] != params.arch.n_char:
        raise ModelError(f"expected {params.arch.n_char}-dim z_c, got {zb.shape[-1]}")
    out = classify_t(Tensor(zb), wrap_tensors(params), params.arch, "ccvae")
    return out.data[0] if single else out.data


def classify_latent_mlp(z: np.ndarray, params: ModelParams) -> np.ndarray:
    """MLP-sigmoid classifier over the full latent (cvae classifier / f_xi)."""
    if params.framework == "ccvae":
        raise ModelError("ccvae uses classify_latent, not the MLP classifier")
    z = np.asarray(z, dtype=params_dtype(params))
    single = z.ndim == 1
    zb = z[None] if single else z
    if zb.shape[-1] != params.arch.latent_dim:
        raise ModelError(f"expected {params.arch.latent_dim}-dim z, got {zb.shape[-1]}")
    out = classify_t(Tensor(zb), wrap_tensors(params), params.arch, params.framework)
    return out.data[0] if single else out.data


def reparameterize(g: GaussianParams, noise: np.ndarray) -> np.ndarray:
    """z = mean + std * noise, for a standard-normal noise draw."""
    noise = np.asarray(noise)
    if noise.shape != g.mean.shape:
        raise ModelError(f"noise shape {noise.shape} != mean shape {g.mean.shape}")
    return g.mean + g.std * noise


def params_dtype(params: ModelParams):
    return next(iter(params.arrays.values())).dtype


# -- checkpoint persistence ---------------------------------------------


def save_checkpoint(params: ModelParams, path: str) -> None:
    """Write params.json plus one raw little-endian float32 file per array."""
    os.makedirs(path, exist_ok=True)
    meta = {
        "framework": params.framework,
        "arch": asdict(params.arch),
        "names": list(params.arrays.keys()),
        "shapes": {k: list(v.shape) for k, v in params.arrays.items()},
        "architecture_hash": params.architecture_hash(),
    }
    for name, arr in params.arrays.items():
        arr.astype("<f4").tofile(os.path.join(path, name + ".f32"))
    with open(os.path.join(path, CHECKPOINT_META), "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)


def load_checkpoint(path: str, expect_framework: str | None = None) -> ModelParams:
    """Load a checkpoint directory; verifies shapes and the architecture hash."""
    meta_path = os.path.join(path, CHECKPOINT_META)
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise IncompatibilityError(f"no checkpoint metadata at {meta_path}")
    except json.JSONDecodeError as e:
        raise IncompatibilityError(f"corrupt checkpoint metadata: {e}")

    arch_kwargs = dict(meta["arch"])
    for key in ("enc_channels", "dec_channels", "char_dims"):
        arch_kwargs[key] = tuple(arch_kwargs[key])
    arch = Architecture(**arch_kwargs)
    arrays = {}
    for name in meta["names"]:
        shape = tuple(meta["shapes"][name])
        fpath = os.path.join(path, name + ".f32")
        if not os.path.exists(fpath):
            raise IncompatibilityError(f"checkpoint array missing: {name}")
        raw = np.fromfile(fpath, dtype="<f4")
        if raw.size != int(np.prod(shape)):
            raise IncompatibilityError(
                f"checkpoint array {name}: {raw.size} values on disk, "
                f"shape {shape} declared")
        arrays[name] = raw.reshape(shape)
    params = ModelParams(meta["framework"], arch, arrays)
    if params.architecture_hash() != meta["architecture_hash"]:
        raise IncompatibilityError("architecture hash mismatch")
    if expect_framework is not None and params.framework != expect_framework:
        raise IncompatibilityError(
            f"checkpoint holds a {params.framework} model, expected {expect_framework}")
    return params
