"""Convolutional autoencoder with a vector-quantized latent grid.

The encoder downsamples a patch through stride-2 convolutions into a grid of
latent vectors; each vector is snapped to its nearest codebook row. Training
minimizes a three-term objective

    total = reconstruction + regularization + alignment_weight * alignment

where reconstruction is the pixel MSE, regularization is the usual codebook +
commitment pair (with stop-gradients), and the alignment term is the mean
squared quantization distance per latent dimension. The alignment term is the
quantity later reused as the anomaly score, so training explicitly pulls
encoder outputs and codebook rows together on normal data.

Gradient flow: the decoder receives ordinary gradients; the encoder receives
the reconstruction gradient through a straight-through copy past the
quantizer, plus the commitment and alignment pulls; the codebook receives the
codebook-loss and alignment pulls only (never the reconstruction gradient).
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DivergenceError
from .layers import Adam, Conv2d, ConvTranspose2d, ReLU
from .patches import AugmentConfig, PatchSet, augment, patch_seed
from .raster import BandStats, atomic_write_bytes

KERNEL, STRIDE, PAD = 4, 2, 1  # exact 2x down/upsampling per layer

_DTYPES = {"float32": np.float32, "float64": np.float64}
_DTYPE_TAGS = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}
_TAG_DTYPES = {"f32": "<f4", "f64": "<f8"}


@dataclass
class ModelConfig:
    """Architecture and training hyperparameters."""

    input_size: int = 256
    in_channels: int = 3
    band_roles: tuple[str, ...] = ("NIR", "Red", "Green")
    conv_layers: int = 3
    conv_channels: tuple[int, ...] = (64, 128)
    latent_dim: int = 32
    codebook_size: int = 256
    commitment_weight: float = 0.25
    alignment_weight: float = 1.0
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 200
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        self.band_roles = tuple(self.band_roles)
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        if self.conv_layers < 1:
            raise ConfigError(f"conv_layers must be >= 1, got {self.conv_layers}")
        if len(self.conv_channels) != self.conv_layers - 1:
            raise ConfigError(
                f"conv_channels must list {self.conv_layers - 1} widths for"
                f" {self.conv_layers} layers, got {self.conv_channels}"
            )
        factor = 2**self.conv_layers
        if self.input_size < factor or self.input_size % factor:
            raise ConfigError(f"input_size {self.input_size} must be a multiple of 2^conv_layers = {factor}")
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.codebook_size < 2:
            raise ConfigError(f"codebook_size must be >= 2, got {self.codebook_size}")
        if len(self.band_roles) != self.in_channels:
            raise ConfigError(
                f"band_roles {self.band_roles} must name all {self.in_channels} input channels"
            )
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.commitment_weight < 0 or self.alignment_weight < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.dtype not in _DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(_DTYPES)}, got {self.dtype}")

    @property
    def np_dtype(self):
        return _DTYPES[self.dtype]

    @property
    def latent_size(self) -> int:
        return self.input_size // 2**self.conv_layers

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "in_channels": self.in_channels,
            "band_roles": list(self.band_roles),
            "conv_layers": self.conv_layers,
            "conv_channels": list(self.conv_channels),
            "latent_dim": self.latent_dim,
            "codebook_size": self.codebook_size,
            "commitment_weight": self.commitment_weight,
            "alignment_weight": self.alignment_weight,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class LossBreakdown:
    total: float
    reconstruction: float
    regularization: float
    alignment: float


@dataclass
class LatentGrid:
    """Encoder output, its quantization, and the per-position distances."""

    z_e: np.ndarray  # [D, h, w]
    z_q: np.ndarray  # [D, h, w]
    indices: np.ndarray  # [h, w] int in [0, K)
    distances: np.ndarray  # [h, w] squared distance ||z_e - z_q||^2


def _quantize_flat(codebook: np.ndarray, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest codebook row per [N, D] vector; ties go to the lowest index.

    The argmin runs on the expanded ||z||^2 - 2 z.E + ||E||^2 form for speed;
    the returned distances are recomputed from the selected rows so exact
    matches report exactly zero.
    """
    with np.errstate(over="ignore"):  # divergent inputs surface as DivergenceError
        sq_z = np.sum(flat * flat, axis=1, keepdims=True)
        sq_e = np.sum(codebook * codebook, axis=1)
        scores = sq_z - 2.0 * (flat @ codebook.T) + sq_e
        indices = np.argmin(scores, axis=1)
        z_q = codebook[indices]
        diff = flat - z_q
        return indices, z_q, np.sum(diff * diff, axis=1)


def quantize(codebook: np.ndarray, z_e: np.ndarray) -> LatentGrid:
    """Snap a [D, h, w] latent grid onto the codebook."""
    codebook = np.asarray(codebook)
    z_e = np.asarray(z_e)
    if z_e.ndim != 3 or codebook.ndim != 2 or z_e.shape[0] != codebook.shape[1]:
        raise ValueError(f"expected z_e [D, h, w] and codebook [K, D], got {z_e.shape} and {codebook.shape}")
    if not (np.all(np.isfinite(z_e)) and np.all(np.isfinite(codebook))):
        raise DataError("quantize requires finite inputs")
    depth, h, w = z_e.shape
    flat = z_e.reshape(depth, h * w).T
    indices, z_q, dist = _quantize_flat(codebook, np.ascontiguousarray(flat))
    return LatentGrid(
        z_e=z_e,
        z_q=np.ascontiguousarray(z_q.T.reshape(depth, h, w)),
        indices=indices.reshape(h, w),
        distances=dist.reshape(h, w),
    )


class VQVAE:
    """Model parameters: encoder/decoder stacks, codebook, and fit metadata."""

    def __init__(self, cfg: ModelConfig, band_stats: BandStats | None = None):
        self.cfg = cfg
        self.band_stats = band_stats
        self.epochs_completed = 0
        self.codebook_usage: list[np.ndarray] = []
        dtype = cfg.np_dtype
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0)))
        enc_chain = (cfg.in_channels, *cfg.conv_channels, cfg.latent_dim)
        dec_chain = (cfg.latent_dim, *cfg.conv_channels[::-1], cfg.in_channels)
        self.enc = [
            Conv2d(enc_chain[i], enc_chain[i + 1], KERNEL, STRIDE, PAD, rng=rng, dtype=dtype)
            for i in range(cfg.conv_layers)
        ]
        self.dec = [
            ConvTranspose2d(dec_chain[i], dec_chain[i + 1], KERNEL, STRIDE, PAD, rng=rng, dtype=dtype)
            for i in range(cfg.conv_layers)
        ]
        # Hidden activations only; the latent head and the reconstruction
        # output stay linear so codes and pixels can live anywhere in range.
        self._enc_act = [ReLU() for _ in range(cfg.conv_layers - 1)]
        self._dec_act = [ReLU() for _ in range(cfg.conv_layers - 1)]
        self.codebook = rng.uniform(
            -1.0 / cfg.codebook_size, 1.0 / cfg.codebook_size, size=(cfg.codebook_size, cfg.latent_dim)
        ).astype(dtype)

    @property
    def dtype(self):
        return self.cfg.np_dtype

    # ----- parameter bookkeeping -------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        """Ordered name -> array mapping covering every trainable tensor."""
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.enc):
            out[f"enc.{i}.w"], out[f"enc.{i}.b"] = layer.w, layer.b
        for i, layer in enumerate(self.dec):
            out[f"dec.{i}.w"], out[f"dec.{i}.b"] = layer.w, layer.b
        out["codebook"] = self.codebook
        return out

    def _param_arrays(self) -> list[np.ndarray]:
        return list(self.parameters().values())

    # ----- forward passes --------------------------------------------------------

    def _check_patch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        expected = (self.cfg.in_channels, self.cfg.input_size, self.cfg.input_size)
        if x.shape != expected:
            raise ValueError(f"patch shape {x.shape} does not match model input {expected}")
        return x.astype(self.dtype, copy=False)

    def _encode_batch(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        h = x
        for i, layer in enumerate(self.enc):
            h = layer.forward(h, cache=cache)
            if i < len(self._enc_act):
                h = self._enc_act[i].forward(h, cache=cache)
        return h

    def _decode_batch(self, z: np.ndarray, cache: bool = False) -> np.ndarray:
        h = z
        for i, layer in enumerate(self.dec):
            h = layer.forward(h, cache=cache)
            if i < len(self._dec_act):
                h = self._dec_act[i].forward(h, cache=cache)
        return h

    def encode(self, patch: np.ndarray) -> np.ndarray:
        """Encoder output z_e shaped [latent_dim, S/2^L, S/2^L]."""
        x = self._check_patch(patch)
        if not np.all(np.isfinite(x)):
            raise DataError("patch contains non-finite values")
        return self._encode_batch(x[None])[0]

    def quantize(self, z_e: np.ndarray) -> LatentGrid:
        return quantize(self.codebook, z_e)

    def decode(self, z_q: np.ndarray) -> np.ndarray:
        """Reconstruction shaped like the input patch."""
        z_q = np.asarray(z_q)
        s = self.cfg.latent_size
        if z_q.shape != (self.cfg.latent_dim, s, s):
            raise ValueError(f"latent shape {z_q.shape} does not match model grid ({self.cfg.latent_dim}, {s}, {s})")
        return self._decode_batch(z_q.astype(self.dtype, copy=False)[None])[0]

    def reconstruct(self, patch: np.ndarray) -> np.ndarray:
        """decode(quantize(encode(patch))), the plain autoencoding path."""
        return self.decode(self.quantize(self.encode(patch)).z_q)

    # ----- loss and gradients ----------------------------------------------------

    def _loss_terms(self, x: np.ndarray, cache: bool):
        batch, _, _, _ = x.shape
        cfg = self.cfg
        z_e = self._encode_batch(x, cache=cache)  # [B, D, h, w]
        depth, h, w = z_e.shape[1:]
        flat = np.ascontiguousarray(z_e.transpose(0, 2, 3, 1).reshape(-1, depth))
        indices, z_q_flat, dist = _quantize_flat(self.codebook, flat)
        z_q = np.ascontiguousarray(z_q_flat.reshape(batch, h, w, depth).transpose(0, 3, 1, 2))
        recon = self._decode_batch(z_q, cache=cache)
        err = recon - x
        n_rec = err.size
        n_pos = batch * h * w
        with np.errstate(over="ignore"):  # divergence is reported, not warned
            rec = float(np.sum(err.astype(np.float64) ** 2) / n_rec)
        mean_d = float(np.sum(dist.astype(np.float64)) / n_pos)
        reg = (1.0 + cfg.commitment_weight) * mean_d
        align = mean_d / cfg.latent_dim
        total = rec + reg + cfg.alignment_weight * align
        breakdown = LossBreakdown(total=total, reconstruction=rec, regularization=reg, alignment=align)
        return breakdown, (z_e, z_q, flat, z_q_flat, indices, err, n_rec, n_pos)

    def loss(self, patch: np.ndarray) -> LossBreakdown:
        """Forward-only loss terms for one patch."""
        x = self._check_patch(patch)[None]
        breakdown, _ = self._loss_terms(x, cache=False)
        if not np.isfinite(breakdown.total):
            raise DivergenceError(f"non-finite loss: {breakdown}")
        return breakdown

    def loss_and_grads(self, batch: np.ndarray, with_latent_grads: bool = False):
        """Loss plus analytic gradients for every tensor in parameters() order.

        The reconstruction gradient reaches the encoder through the
        straight-through copy (identical to the gradient at the decoder
        input); the codebook gradient comes from the codebook and alignment
        terms only. With with_latent_grads=True a third element exposes the
        gradients at the latent grid for verification.
        """
        x = np.asarray(batch, dtype=self.dtype)
        if x.ndim != 4:
            raise ValueError(f"expected [B, C, S, S], got shape {x.shape}")
        cfg = self.cfg
        breakdown, ctx = self._loss_terms(x, cache=True)
        z_e, z_q, flat, z_q_flat, indices, err, n_rec, n_pos = ctx
        if not np.isfinite(breakdown.total):
            raise DivergenceError(f"non-finite loss: {breakdown}")

        # reconstruction -> decoder (and straight-through to the encoder)
        d_recon = (2.0 / n_rec) * err
        grad = d_recon
        for i in range(len(self.dec) - 1, -1, -1):
            if i < len(self._dec_act):
                grad = self._dec_act[i].backward(grad)
            grad = self.dec[i].backward(grad)
        d_zq_rec = grad  # [B, D, h, w], gradient at the decoder input

        diff = z_e - z_q
        pull = 2.0 * (cfg.commitment_weight + cfg.alignment_weight / cfg.latent_dim) / n_pos
        d_ze = d_zq_rec + pull * diff

        d_codebook = np.zeros_like(self.codebook)
        push = 2.0 * (1.0 + cfg.alignment_weight / cfg.latent_dim) / n_pos
        np.add.at(d_codebook, indices, (push * (z_q_flat - flat)).astype(self.codebook.dtype))

        grad = d_ze
        for i in range(len(self.enc) - 1, -1, -1):
            if i < len(self._enc_act):
                grad = self._enc_act[i].backward(grad)
            grad = self.enc[i].backward(grad)

        grads = []
        for layer in self.enc:
            grads.extend(layer.grads())
        for layer in self.dec:
            grads.extend(layer.grads())
        grads.append(d_codebook)
        if with_latent_grads:
            return breakdown, grads, {"d_ze": d_ze, "d_zq_rec": d_zq_rec, "indices": indices}
        return breakdown, grads

    # ----- persistence -----------------------------------------------------------

    def save(self, directory: str | os.PathLike) -> None:
        """Write a checkpoint directory: manifest.json + one .bin per tensor."""
        directory = str(directory)
        os.makedirs(directory, exist_ok=True)
        tensors = []
        for name, array in self.parameters().items():
            tag = _DTYPE_TAGS[array.dtype]
            fname = name.replace(".", "_") + ".bin"
            atomic_write_bytes(os.path.join(directory, fname), array.astype(f"<{array.dtype.str[1:]}").tobytes())
            tensors.append({"name": name, "shape": list(array.shape), "dtype": tag, "file": fname})
        manifest = {
            "format": "scarmap-checkpoint",
            "version": 1,
            "config": self.cfg.to_dict(),
            "band_stats": self.band_stats.to_dict() if self.band_stats is not None else None,
            "epochs_completed": self.epochs_completed,
            "tensors": tensors,
        }
        atomic_write_bytes(os.path.join(directory, "manifest.json"), (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode())

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "VQVAE":
        directory = str(directory)
        manifest_path = os.path.join(directory, "manifest.json")
        if not os.path.exists(manifest_path):
            raise DataError(f"missing checkpoint manifest {manifest_path}")
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        if manifest.get("format") != "scarmap-checkpoint":
            raise DataError(f"{manifest_path} is not a checkpoint manifest")
        cfg = ModelConfig.from_dict(manifest["config"])
        stats = BandStats.from_dict(manifest["band_stats"]) if manifest.get("band_stats") else None
        model = cls(cfg, band_stats=stats)
        model.epochs_completed = int(manifest.get("epochs_completed", 0))
        params = model.parameters()
        seen = set()
        for entry in manifest["tensors"]:
            name = entry["name"]
            if name not in params:
                raise DataError(f"checkpoint tensor {name!r} does not exist in the model")
            array = np.fromfile(os.path.join(directory, entry["file"]), dtype=_TAG_DTYPES[entry["dtype"]])
            shape = tuple(entry["shape"])
            if array.size != int(np.prod(shape)):
                raise DataError(f"checkpoint tensor {name!r} payload does not match shape {shape}")
            target = params[name]
            if shape != target.shape:
                raise DataError(f"checkpoint tensor {name!r} shape {shape} != model shape {target.shape}")
            target[...] = array.reshape(shape).astype(target.dtype)
            seen.add(name)
        missing = set(params) - seen
        if missing:
            raise DataError(f"checkpoint is missing tensors: {sorted(missing)}")
        return model


def train(
    patchset: PatchSet | np.ndarray,
    cfg: ModelConfig,
    *,
    augment_cfg: AugmentConfig | None = None,
    initial: VQVAE | None = None,
    band_stats: BandStats | None = None,
    on_epoch=None,
) -> tuple[VQVAE, list[LossBreakdown]]:
    """Train for cfg.epochs epochs on normal (non-burnt) patches.

    Fully seeded: initialization, epoch shuffles, and per-patch augmentation
    seeds all derive from cfg.seed, so a rerun on the same machine reproduces
    the loss history bit for bit. Pass ``initial`` to resume; epoch numbering
    then continues from the checkpoint's count (the optimizer state restarts).
    """
    patches = patchset.patches if isinstance(patchset, PatchSet) else np.asarray(patchset)
    if patches.ndim != 4:
        raise ValueError(f"expected patches [n, bands, S, S], got shape {patches.shape}")
    if patches.shape[0] == 0:
        raise DataError("cannot train on an empty patch set")
    if patches.shape[1] != cfg.in_channels or patches.shape[2:] != (cfg.input_size, cfg.input_size):
        raise DataError(
            f"patches shaped {patches.shape[1:]} do not match the model input"
            f" ({cfg.in_channels}, {cfg.input_size}, {cfg.input_size})"
        )

    model = initial if initial is not None else VQVAE(cfg, band_stats=band_stats)
    if band_stats is not None:
        model.band_stats = band_stats
    start_epoch = model.epochs_completed
    optimizer = Adam(model._param_arrays(), lr=cfg.lr)
    n = patches.shape[0]
    history: list[LossBreakdown] = []
    model.codebook_usage = []  # per-epoch assignment counts, a dead-code diagnostic

    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        order = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1, epoch))).permutation(n)
        sums = np.zeros(4, dtype=np.float64)
        usage = np.zeros(cfg.codebook_size, dtype=np.int64)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch = patches[idx].astype(model.dtype)
            if augment_cfg is not None:
                batch = np.stack(
                    [augment(p, augment_cfg, patch_seed(cfg.seed, epoch, int(j))) for p, j in zip(batch, idx)]
                )
            breakdown, grads, latent = model.loss_and_grads(batch, with_latent_grads=True)
            optimizer.step(grads)
            usage += np.bincount(latent["indices"], minlength=cfg.codebook_size)
            weight = len(idx)
            sums += weight * np.array(
                [breakdown.total, breakdown.reconstruction, breakdown.regularization, breakdown.alignment]
            )
        epoch_loss = LossBreakdown(*(sums / n))
        history.append(epoch_loss)
        model.codebook_usage.append(usage)
        model.epochs_completed = epoch + 1
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)
    return model, history


def save_history_csv(history: list[LossBreakdown], path: str | os.PathLike, start_epoch: int = 0) -> None:
    """Write the loss history as ``epoch,total,rec,reg,align`` rows."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["epoch", "total", "rec", "reg", "align"])
    for i, lb in enumerate(history):
        writer.writerow([start_epoch + i, repr(lb.total), repr(lb.reconstruction), repr(lb.regularization), repr(lb.alignment)])
    atomic_write_bytes(str(path), buf.getvalue().encode())


def toy_config(**overrides) -> ModelConfig:
    """Small configuration for desk-scale experiments and tests."""
    base = dict(
        input_size=64,
        in_channels=3,
        band_roles=("NIR", "Red", "Green"),
        conv_layers=3,
        conv_channels=(16, 32),
        latent_dim=8,
        codebook_size=32,
        lr=2e-3,
        batch_size=16,
        epochs=20,
        seed=0,
    )
    base.update(overrides)
    return ModelConfig(**base)
