"""Convolutional autoencoder over tactile contact-depth patches.

Encoder: four 4x4 stride-2 pad-1 convolutions (channels 8, 16, 32, 64)
with ReLU, then a dense layer to the latent dimension.  The decoder
mirrors it with transposed convolutions (output padding chosen per layer
so odd input sizes reconstruct exactly); a final sigmoid keeps outputs in
the depth range [0, 1].
"""

from __future__ import annotations

import torch
from torch import nn

CHANNELS = (8, 16, 32, 64)
KERNEL, STRIDE, PAD = 4, 2, 1


def conv_out(size: int) -> int:
    return (size + 2 * PAD - KERNEL) // STRIDE + 1


def encoder_size_chain(height: int, width: int) -> list[tuple[int, int]]:
    chain = [(height, width)]
    for _ in CHANNELS:
        h, w = chain[-1]
        chain.append((conv_out(h), conv_out(w)))
    return chain


class PatchAutoencoder(nn.Module):
    def __init__(self, height: int, width: int, latent_dim: int = 128):
        super().__init__()
        chain = encoder_size_chain(height, width)
        if min(chain[-1]) < 1:
            raise ValueError(f"input {height}x{width} too small for 4 "
                             "stride-2 convolutions")
        self.input_shape = (height, width)
        self.latent_dim = latent_dim
        self.bottleneck = chain[-1]

        enc = []
        in_ch = 1
        for out_ch in CHANNELS:
            enc += [nn.Conv2d(in_ch, out_ch, KERNEL, STRIDE, PAD), nn.ReLU()]
            in_ch = out_ch
        self.conv = nn.Sequential(*enc)
        flat = CHANNELS[-1] * chain[-1][0] * chain[-1][1]
        self.fc = nn.Linear(flat, latent_dim)

        self.fc_up = nn.Linear(latent_dim, flat)
        dec = []
        rev_ch = (*reversed(CHANNELS[:-1]), 1)
        for i, out_ch in enumerate(rev_ch):
            h_in, w_in = chain[len(CHANNELS) - i]
            h_out, w_out = chain[len(CHANNELS) - i - 1]
            opad = (h_out - ((h_in - 1) * STRIDE - 2 * PAD + KERNEL),
                    w_out - ((w_in - 1) * STRIDE - 2 * PAD + KERNEL))
            dec.append(nn.ConvTranspose2d(in_ch, out_ch, KERNEL, STRIDE, PAD,
                                          output_padding=opad))
            dec.append(nn.ReLU() if i < len(rev_ch) - 1 else nn.Sigmoid())
            in_ch = out_ch
        self.deconv = nn.Sequential(*dec)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        z = self.conv(x)
        return self.fc(z.flatten(1))  # channel-major flatten

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        z = self.fc_up(latent)
        z = z.view(-1, CHANNELS[-1], *self.bottleneck)
        return self.deconv(z)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(x))

    def export_tensors(self, reference_input: torch.Tensor) -> dict:
        """Named float32 tensors in the ENCW layout (encoder side only),
        plus h_nc and the reference input/output validation pair."""
        self.eval()
        tensors = {}
        conv_layers = [m for m in self.conv if isinstance(m, nn.Conv2d)]
        for i, layer in enumerate(conv_layers, start=1):
            tensors[f"conv{i}.weight"] = layer.weight.detach().numpy()
            tensors[f"conv{i}.bias"] = layer.bias.detach().numpy()
        tensors["fc.weight"] = self.fc.weight.detach().numpy()
        tensors["fc.bias"] = self.fc.bias.detach().numpy()
        with torch.no_grad():
            zero = torch.zeros(1, 1, *self.input_shape)
            tensors["h_nc"] = self.encode(zero)[0].numpy()
            tensors["reference_input"] = reference_input[0, 0].numpy()
            tensors["reference_output"] = self.encode(reference_input)[0].numpy()
        return {k: v.astype("float32") for k, v in tensors.items()}
