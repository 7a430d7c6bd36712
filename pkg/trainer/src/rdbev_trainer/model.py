"""Dual-chirp RD-to-BEV occupancy network.

Both chirp branches share one receive-antenna mixing layer (1x1 conv over the
stacked re/im channels) and one feature extractor; the streams are fused by
concatenation + 1x1 conv, encoded with a strided RD encoder, flattened along
Doppler into channels, expanded to a coarse BEV map, and decoded with
upsampling stages carrying lateral skip projections, ending in full-resolution
refinement and a single-logit head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class ModelConfig:
    num_rx: int = 8
    rx_mix_channels: int = 16  # K
    extractor_channels: tuple[int, int] = (24, 32)
    fusion_channels: int = 64
    encoder_channels: tuple[int, int, int] = (96, 128, 224)
    doppler_bins_encoded: int = 16  # D after the strided encoder (128 / 8)
    doppler_squeeze_channels: int = 560
    bev_seed_width: int = 19  # coarse lateral size unfolded from channels
    bev_seed_channels: int = 48
    decoder_channels: tuple[int, int, int] = (160, 96, 56)
    refine_channels: int = 40
    out_height: int = 120
    out_width: int = 152
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25


def _block(cin: int, cout: int, stride=1, kernel=3) -> nn.Sequential:
    pad = kernel // 2 if isinstance(kernel, int) else tuple(k // 2 for k in kernel)
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel, stride=stride, padding=pad),
        nn.GroupNorm(8, cout),
        nn.ReLU(inplace=True),
    )


class DualChirpBevNet(nn.Module):
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        cin = 2 * cfg.num_rx
        e1, e2 = cfg.extractor_channels
        # shared across chirp branches: single storage, applied twice
        self.rx_mix = nn.Conv2d(cin, cfg.rx_mix_channels, 1)
        self.extractor = nn.Sequential(
            _block(cfg.rx_mix_channels, e1, stride=2),
            _block(e1, e2),
        )
        self.fusion = nn.Conv2d(2 * e2, cfg.fusion_channels, 1)
        c1, c2, c3 = cfg.encoder_channels
        self.encoder = nn.Sequential(
            _block(cfg.fusion_channels, c1, stride=2),
            _block(c1, c2, stride=2),
            _block(c2, c3),
        )
        self.doppler_squeeze = nn.Sequential(
            nn.Conv2d(c3, cfg.doppler_squeeze_channels, (1, cfg.doppler_bins_encoded)),
            nn.GroupNorm(8, cfg.doppler_squeeze_channels),
            nn.ReLU(inplace=True),
        )
        self.bev_unfold = nn.Conv2d(
            cfg.doppler_squeeze_channels, cfg.bev_seed_channels * cfg.bev_seed_width, 1
        )
        d1, d2, d3 = cfg.decoder_channels
        self.dec1 = _block(cfg.bev_seed_channels, d1)
        self.dec2 = _block(d1, d2)
        self.dec3 = _block(d2, d3)
        self.skip1 = nn.Conv2d(cfg.bev_seed_channels, d1, 1)
        self.skip2 = nn.Conv2d(d1, d2, 1)
        self.refine = nn.Sequential(
            _block(d3, cfg.refine_channels),
            nn.Conv2d(cfg.refine_channels, 1, 3, padding=1),
        )

    def chirp_features(self, x: torch.Tensor) -> torch.Tensor:
        return self.extractor(self.rx_mix(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (B, 2, 2*N_rx, R, D) normalized input -> (B, H, W) logits."""
        if x.dim() != 5 or x.shape[1] != 2 or x.shape[2] != 2 * self.cfg.num_rx:
            raise ValueError(f"expected (B, 2, {2 * self.cfg.num_rx}, R, D), got {tuple(x.shape)}")
        fa = self.chirp_features(x[:, 0])
        fb = self.chirp_features(x[:, 1])
        fused = self.fusion(torch.cat([fa, fb], dim=1))
        enc = self.encoder(fused)  # (B, C3, R', D')
        rangewise = self.doppler_squeeze(enc)  # (B, Cd, R', 1)
        b, _, n_range, _ = rangewise.shape
        seed = self.bev_unfold(rangewise)  # (B, Cs*W0, R', 1)
        seed = seed.view(b, self.cfg.bev_seed_channels, self.cfg.bev_seed_width, n_range)
        seed = seed.permute(0, 1, 3, 2).contiguous()  # (B, Cs, R', W0): rows = range
        h, w = self.cfg.out_height, self.cfg.out_width
        y = F.interpolate(seed, size=(h // 4, w // 4), mode="bilinear", align_corners=False)
        y = self.dec1(y) + self.skip1(y)
        y2 = F.interpolate(y, size=(h // 2, w // 2), mode="bilinear", align_corners=False)
        y2 = self.dec2(y2) + self.skip2(y2)
        y3 = F.interpolate(y2, size=(h, w), mode="bilinear", align_corners=False)
        y3 = self.dec3(y3)
        return self.refine(y3).squeeze(1)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)


def masked_focal_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    mask: torch.Tensor,
    gamma: float = 2.0,
    alpha: float = 0.25,
) -> torch.Tensor:
    """Mean focal loss over masked cells; unmasked cells are never touched,
    so their gradients are exactly zero."""
    m = mask.bool()
    z = logits[m]
    y = labels.bool()[m].float()
    log_p = F.logsigmoid(z)
    log_1mp = F.logsigmoid(-z)
    log_pt = y * log_p + (1.0 - y) * log_1mp
    pt = log_pt.exp()
    alpha_t = y * alpha + (1.0 - y) * (1.0 - alpha)
    return (-(alpha_t * (1.0 - pt) ** gamma * log_pt)).mean()
