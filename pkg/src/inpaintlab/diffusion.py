"""Noise-prediction diffusion schedule (cosine, T=1000) shared by both stages."""

from __future__ import annotations

import numpy as np
import torch

TRAIN_TIMESTEPS = 1000


class CosineSchedule:
    """Squared-cosine cumulative signal schedule."""

    def __init__(self, timesteps: int = TRAIN_TIMESTEPS, s: float = 0.008):
        self.timesteps = timesteps
        t = np.arange(timesteps + 1, dtype=np.float64)
        f = np.cos((t / timesteps + s) / (1 + s) * np.pi / 2) ** 2
        alpha_bar = f / f[0]
        betas = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 0.0, 0.999)
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alpha_bar = np.cumprod(self.alphas)

    def add_noise(self, x0: torch.Tensor, eps: torch.Tensor,
                  t: torch.Tensor) -> torch.Tensor:
        ab = torch.as_tensor(self.alpha_bar, dtype=x0.dtype,
                             device=x0.device)[t]
        while ab.dim() < x0.dim():
            ab = ab.unsqueeze(-1)
        return ab.sqrt() * x0 + (1 - ab).sqrt() * eps

    def sample_timesteps(self, n_steps: int) -> list:
        """Strided descending subset of the training timesteps."""
        idx = np.linspace(0, self.timesteps - 1, n_steps).round().astype(int)
        return list(dict.fromkeys(idx.tolist()))[::-1]

    def ancestral_step(self, x_t: torch.Tensor, eps_hat: torch.Tensor,
                       t: int, t_prev: int, noise: torch.Tensor) -> torch.Tensor:
        """One reverse step from timestep t to t_prev (t_prev < t; -1 = clean)."""
        ab_t = float(self.alpha_bar[t])
        ab_prev = 1.0 if t_prev < 0 else float(self.alpha_bar[t_prev])
        x0 = (x_t - np.sqrt(1 - ab_t) * eps_hat) / np.sqrt(ab_t)
        x0 = x0.clamp(-1.5, 1.5)
        if t_prev < 0:
            return x0
        alpha_eff = ab_t / ab_prev
        beta_eff = 1.0 - alpha_eff
        var = beta_eff * (1 - ab_prev) / (1 - ab_t)
        mean = (np.sqrt(alpha_eff) * (1 - ab_prev) * x_t
                + np.sqrt(ab_prev) * beta_eff * x0) / (1 - ab_t)
        return mean + np.sqrt(max(var, 0.0)) * noise
