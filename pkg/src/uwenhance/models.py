"""Generator and patch discriminator networks.

The generator is a fully convolutional encoder / 9-residual-block /
decoder. Its forward pass also returns the encoder output (256 x H/4 x W/4)
as the feature block used for covariance alignment against real images.
The discriminator is a 5-layer patch classifier emitting one logit per
overlapping patch: 32 x 32 for a 256 x 256 input.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ValidationError

DISCRIMINATOR_MIN_INPUT = 16

# (filters, stride) per discriminator layer; 4x4 kernels throughout
DISC_LAYERS = [(64, 2), (128, 2), (256, 2), (512, 1), (1, 1)]


class ResidualBlock(nn.Module):
    """conv-IN-ReLU-conv-IN plus identity skip, reflect padded."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels, affine=True),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels, affine=True),
        )

    def forward(self, x):
        return x + self.body(x)


class Generator(nn.Module):
    """Enhancement network; output is bounded to [0, 1] by a rescaled tanh."""

    NUM_RESIDUAL_BLOCKS = 9

    def __init__(self):
        super().__init__()
        self.encoder = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(3, 64, 7),
            nn.InstanceNorm2d(64, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(64, 128, 3, stride=2, padding=1),
            nn.InstanceNorm2d(128, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(128, 256, 3, stride=2, padding=1),
            nn.InstanceNorm2d(256, affine=True),
            nn.ReLU(inplace=True),
        )
        self.blocks = nn.Sequential(
            *[ResidualBlock(256) for _ in range(self.NUM_RESIDUAL_BLOCKS)]
        )
        self.decoder = nn.Sequential(
            nn.ConvTranspose2d(256, 128, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(128, affine=True),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(128, 64, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(64, affine=True),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(3),
            nn.Conv2d(64, 3, 7),
        )

    @staticmethod
    def _pad_to_multiple(x, multiple=4):
        h, w = x.shape[-2:]
        ph = (-h) % multiple
        pw = (-w) % multiple
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="reflect")
        return x, (h, w)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Encoder activations only; used for the real-image branch."""
        x = _check_image_batch(x)
        x, _ = self._pad_to_multiple(x)
        return self.encoder(x)

    def forward(self, x: torch.Tensor):
        x = _check_image_batch(x)
        x, (h, w) = self._pad_to_multiple(x)
        feats = self.encoder(x)
        out = self.decoder(self.blocks(feats))
        out = (torch.tanh(out) + 1.0) / 2.0
        return out[..., :h, :w], feats


class PatchDiscriminator(nn.Module):
    """Emits an unbounded logit per patch; losses apply the sigmoid."""

    def __init__(self):
        super().__init__()
        layers = []
        in_ch = 3
        for i, (out_ch, stride) in enumerate(DISC_LAYERS):
            last = i == len(DISC_LAYERS) - 1
            if stride == 1:
                # keep spatial size under a 4x4 kernel: asymmetric same-pad
                layers.append(nn.ZeroPad2d((1, 2, 1, 2)))
                layers.append(nn.Conv2d(in_ch, out_ch, 4, stride=1))
            else:
                layers.append(nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1))
            if not last:
                layers.append(nn.InstanceNorm2d(out_ch, affine=True))
                layers.append(nn.LeakyReLU(0.2, inplace=True))
            # final layer: bare logits, no norm (degenerate on 1 channel)
            in_ch = out_ch
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = _check_image_batch(x)
        h, w = x.shape[-2:]
        if h < DISCRIMINATOR_MIN_INPUT or w < DISCRIMINATOR_MIN_INPUT:
            raise ValidationError(
                f"discriminator input {h}x{w} below minimum "
                f"{DISCRIMINATOR_MIN_INPUT}x{DISCRIMINATOR_MIN_INPUT}"
            )
        return self.net(x)


def patch_grid_size(h: int, w: int) -> tuple[int, int]:
    """Output grid for the discriminator's stride sequence."""
    for _, stride in DISC_LAYERS:
        if stride == 2:
            h, w = (h + 2 - 4) // 2 + 1, (w + 2 - 4) // 2 + 1
        else:
            h, w = h + 3 - 4 + 1, w + 3 - 4 + 1
    return h, w


def _check_image_batch(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if x.dim() != 4 or x.shape[1] != 3:
        raise ValidationError(f"expected N x 3 x H x W batch, got {tuple(x.shape)}")
    return x


def init_weights(net: nn.Module, seed: int | None = None) -> nn.Module:
    """Normal(0, 0.02) conv weights, unit norm scales, zero offsets."""
    gen = torch.Generator()
    if seed is not None:
        gen.manual_seed(seed)
    with torch.no_grad():
        for m in net.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * 0.02)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.InstanceNorm2d) and m.affine:
                m.weight.fill_(1.0)
                m.bias.zero_()
    return net


def image_to_tensor(image) -> torch.Tensor:
    """H x W x 3 float array -> 1 x 3 x H x W float32 tensor."""
    import numpy as np

    arr = np.asarray(image, dtype=np.float32)
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0).contiguous()


def tensor_to_image(t: torch.Tensor):
    """1 x 3 x H x W tensor -> H x W x 3 float64 array."""
    return t.detach().squeeze(0).permute(1, 2, 0).double().cpu().numpy()
