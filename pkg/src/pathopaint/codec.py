"""Image <-> latent codec with a fixed spatial downsampling factor.

Two modes: ``identity`` passes pixels through untouched (f=1, C=3) and
is handy for tests; ``learned`` is a small convolutional autoencoder
whose encoder output is tanh-bounded so diffusion runs on latents in
[-1, 1]. After pretraining the codec is frozen and both directions are
pure functions.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
import torch
import torch.nn as nn

from .container import (
    CODEC_MAGIC,
    load_arrays_into,
    read_container,
    state_dict_to_arrays,
    write_container,
)
from .errors import ContractError, ParameterError, ShapeError


class _ConvAutoencoder(nn.Module):
    def __init__(self, latent_channels: int, width: int, n_down: int):
        super().__init__()
        enc = []
        ch = 3
        for i in range(n_down):
            out = width * (2**i)
            enc += [nn.Conv2d(ch, out, 3, stride=2, padding=1), nn.SiLU()]
            ch = out
        enc += [nn.Conv2d(ch, latent_channels, 3, padding=1), nn.Tanh()]
        self.encoder = nn.Sequential(*enc)

        dec = [nn.Conv2d(latent_channels, ch, 3, padding=1), nn.SiLU()]
        for i in reversed(range(n_down)):
            out = width * (2 ** max(i - 1, 0)) if i > 0 else width
            dec += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(ch, out, 3, padding=1),
                nn.SiLU(),
            ]
            ch = out
        dec += [nn.Conv2d(ch, 3, 3, padding=1), nn.Sigmoid()]
        self.decoder = nn.Sequential(*dec)

    def forward(self, x):
        return self.decoder(self.encoder(x))


class LatentCodec:
    """Deterministic encode/decode around a frozen (or identity) codec."""

    def __init__(
        self,
        mode: str = "learned",
        downsample_factor: int = 4,
        latent_channels: int = 4,
        width: int = 32,
        seed: int = 0,
    ):
        if mode not in ("identity", "learned"):
            raise ParameterError(f"unknown codec mode {mode!r}")
        if mode == "identity":
            if downsample_factor != 1 or latent_channels != 3:
                raise ParameterError(
                    "identity codec requires downsample_factor=1 and latent_channels=3"
                )
            self.net = None
        else:
            n_down = int(math.log2(downsample_factor)) if downsample_factor > 1 else 0
            if 2**n_down != downsample_factor:
                raise ParameterError(
                    f"downsample_factor must be a power of two, got {downsample_factor}"
                )
            torch.manual_seed(seed)
            self.net = _ConvAutoencoder(latent_channels, width, n_down)
            self.net.eval()
        self.mode = mode
        self.downsample_factor = int(downsample_factor)
        self.latent_channels = int(latent_channels)
        self.width = int(width)
        self.seed = int(seed)
        self.frozen = mode == "identity"
        self.pretrain_losses: list[float] = []

    def _check_image(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float32)
        if image.ndim != 3 or image.shape[0] != 3:
            raise ShapeError(f"image must be [3, H, W], got {image.shape}")
        f = self.downsample_factor
        if image.shape[1] % f or image.shape[2] % f:
            raise ShapeError(
                f"image dims {image.shape[1:]} not divisible by factor {f}"
            )
        return image

    def encode(self, image: np.ndarray) -> np.ndarray:
        """Encode an RGB image in [0, 1] to a latent [C, H/f, W/f]."""
        image = self._check_image(image)
        if self.mode == "identity":
            return image.copy()
        with torch.no_grad():
            z = self.net.encoder(torch.from_numpy(image)[None])
        return z[0].numpy()

    def decode(self, latent: np.ndarray) -> np.ndarray:
        """Decode a latent back to an RGB image clamped to [0, 1]."""
        latent = np.asarray(latent, dtype=np.float32)
        if latent.ndim != 3 or latent.shape[0] != self.latent_channels:
            raise ShapeError(
                f"latent must be [{self.latent_channels}, h, w], got {latent.shape}"
            )
        if self.mode == "identity":
            return np.clip(latent, 0.0, 1.0)
        with torch.no_grad():
            x = self.net.decoder(torch.from_numpy(latent)[None])
        return np.clip(x[0].numpy(), 0.0, 1.0)

    def parameter_digest(self) -> str:
        """Content hash of all parameters; used by frozen-codec checks."""
        h = hashlib.sha256()
        if self.net is not None:
            for name, tensor in sorted(self.net.state_dict().items()):
                h.update(name.encode())
                h.update(tensor.detach().cpu().numpy().tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        meta = {
            "mode": 0 if self.mode == "identity" else 1,
            "downsample_factor": self.downsample_factor,
            "latent_channels": self.latent_channels,
            "width": self.width,
            "seed": self.seed,
            "frozen": int(self.frozen),
        }
        arrays = state_dict_to_arrays(self.net) if self.net is not None else {}
        write_container(path, CODEC_MAGIC, meta, arrays)

    @classmethod
    def load(cls, path) -> "LatentCodec":
        _, _, meta, arrays = read_container(path, expect_magic=CODEC_MAGIC)
        codec = cls(
            mode="identity" if meta["mode"] == 0 else "learned",
            downsample_factor=meta["downsample_factor"],
            latent_channels=meta["latent_channels"],
            width=meta["width"],
            seed=meta["seed"],
        )
        if codec.net is not None:
            load_arrays_into(codec.net, arrays)
        codec.frozen = bool(meta["frozen"])
        return codec


def pretrain_codec(
    codec: LatentCodec,
    corpus,
    epochs: int,
    seed: int = 0,
    batch_size: int = 16,
    lr: float = 2e-3,
) -> LatentCodec:
    """Train the autoencoder on reconstruction, then freeze it.

    ``corpus`` is a sequence of PatchSample-like objects exposing
    ``.image``. Per-epoch mean losses land in ``codec.pretrain_losses``.
    """
    if codec.mode == "identity":
        raise ContractError("identity codec is not trainable")
    if epochs < 0:
        raise ParameterError("epochs must be >= 0")
    if len(corpus) == 0:
        raise ParameterError("empty corpus")

    images = torch.from_numpy(
        np.stack([np.asarray(p.image, dtype=np.float32) for p in corpus])
    )
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(codec.net.parameters(), lr=lr)
    codec.net.train()
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(corpus))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            batch = images[idx]
            recon = codec.net(batch)
            loss = torch.mean((recon - batch) ** 2)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss)
            n_batches += 1
        losses.append(epoch_loss / n_batches)
    codec.net.eval()
    for p in codec.net.parameters():
        p.requires_grad_(False)
    codec.frozen = True
    codec.pretrain_losses = losses
    return codec


def reconstruction_mae(codec: LatentCodec, corpus) -> float:
    """Mean absolute round-trip error over a corpus, in [0, 1] units."""
    total = 0.0
    for p in corpus:
        image = np.asarray(p.image, dtype=np.float32)
        total += float(np.abs(codec.decode(codec.encode(image)) - image).mean())
    return total / len(corpus)
