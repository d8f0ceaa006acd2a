"""Finite-difference oracle for the three-term training loss.

The training objective contains stop-gradients (the straight-through copy,
the frozen sides of the codebook/commitment pair) which are part of the
loss *definition*, not an approximation. The oracle therefore evaluates the
loss with those quantities captured as constants at the unperturbed
parameters; its central differences must then match the analytic gradients
exactly (up to truncation error).
"""

from __future__ import annotations

import numpy as np

from scarmap.model import VQVAE, _quantize_flat


def frozen_loss(model: VQVAE, x: np.ndarray):
    """Return loss_tilde() whose gradient at the current parameters equals
    model.loss_and_grads(x); constants are captured now."""
    cfg = model.cfg
    z_e0 = model._encode_batch(x)
    batch, depth, h, w = z_e0.shape
    n_pos = batch * h * w
    flat0 = z_e0.transpose(0, 2, 3, 1).reshape(-1, depth)
    idx0, zq0_flat, _ = _quantize_flat(model.codebook, flat0)
    delta0 = (zq0_flat - flat0).reshape(batch, h, w, depth).transpose(0, 3, 1, 2)

    def loss_tilde() -> float:
        z_e = model._encode_batch(x)
        recon = model._decode_batch(z_e + delta0)  # straight-through form
        rec = float(np.mean((recon - x) ** 2))
        flat = z_e.transpose(0, 2, 3, 1).reshape(-1, depth)
        rows = model.codebook[idx0]  # assignments frozen
        codebook_term = float(np.sum((rows - flat0) ** 2)) / n_pos  # encoder frozen
        commit_term = float(np.sum((flat - zq0_flat) ** 2)) / n_pos  # codebook frozen
        align_term = float(np.sum((flat - rows) ** 2)) / (n_pos * depth)  # both live
        return rec + codebook_term + cfg.commitment_weight * commit_term + cfg.alignment_weight * align_term

    return loss_tilde


def max_relative_gradient_error(model: VQVAE, x: np.ndarray, samples_per_tensor: int | None = None, h: float = 1e-6):
    """Compare analytic gradients with central differences of frozen_loss.

    samples_per_tensor=None checks every element. Returns (max_rel_err, where).
    """
    _, grads = model.loss_and_grads(x)
    loss_tilde = frozen_loss(model, x)
    rng = np.random.default_rng(0)
    worst, where = 0.0, None
    names = list(model.parameters().keys())
    params = list(model.parameters().values())
    for name, param, grad in zip(names, params, grads):
        flat = param.ravel()
        grad_flat = grad.ravel()
        if samples_per_tensor is None or samples_per_tensor >= flat.size:
            indices = range(flat.size)
        else:
            indices = rng.choice(flat.size, size=samples_per_tensor, replace=False)
        for i in indices:
            old = flat[i]
            flat[i] = old + h
            plus = loss_tilde()
            flat[i] = old - h
            minus = loss_tilde()
            flat[i] = old
            fd = (plus - minus) / (2.0 * h)
            err = abs(fd - grad_flat[i]) / max(abs(fd), abs(grad_flat[i]), 1e-8)
            if err > worst:
                worst, where = err, f"{name}[{i}]"
    return worst, where
