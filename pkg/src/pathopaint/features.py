"""Patch feature extractors feeding the embedding bank.

Two desk-scale options stand in for a large self-supervised backbone:

* :class:`RandomProjectionExtractor` — a seeded linear featurizer over
  non-overlapping pixel blocks. Training-free and fully deterministic,
  which makes it the default for tests and smoke runs.
* :class:`ConvFeatureExtractor` — a small convolutional encoder trained
  with a contrastive instance-discrimination objective on the corpus.

Both produce a feature map at 1/stride resolution; regional embeddings
are obtained by mask pooling over it (see :mod:`pathopaint.bank`).
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .augment import joint_augment
from .container import (
    EXTRACTOR_MAGIC,
    load_arrays_into,
    read_container,
    state_dict_to_arrays,
    write_container,
)
from .errors import ParameterError, ShapeError


def _check_dims(image: np.ndarray, stride: int) -> np.ndarray:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"image must be [3, H, W], got {image.shape}")
    if image.shape[1] % stride or image.shape[2] % stride:
        raise ShapeError(
            f"image dims {image.shape[1:]} not divisible by stride {stride}"
        )
    return image


class RandomProjectionExtractor:
    """Seeded Gaussian projection of s x s pixel blocks to d features."""

    kind = "random_projection"

    def __init__(self, feature_dim: int = 32, stride: int = 4, seed: int = 0):
        if feature_dim < 1 or stride < 1:
            raise ParameterError("feature_dim and stride must be positive")
        self.feature_dim = int(feature_dim)
        self.stride = int(stride)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        n_in = 3 * stride * stride
        self.weight = rng.standard_normal((feature_dim, n_in)).astype(np.float32)
        self.weight /= np.sqrt(n_in)

    def extract(self, image: np.ndarray) -> np.ndarray:
        image = _check_dims(image, self.stride)
        s = self.stride
        _, h, w = image.shape
        blocks = (
            image.reshape(3, h // s, s, w // s, s)
            .transpose(1, 3, 0, 2, 4)
            .reshape(h // s * (w // s), 3 * s * s)
        )
        feats = blocks @ self.weight.T
        return feats.T.reshape(self.feature_dim, h // s, w // s)

    def save(self, path) -> None:
        meta = {
            "kind": 0,
            "feature_dim": self.feature_dim,
            "stride": self.stride,
            "seed": self.seed,
            "trained": 1,
        }
        write_container(path, EXTRACTOR_MAGIC, meta, {"weight": self.weight})


class _ConvTrunk(nn.Module):
    def __init__(self, feature_dim: int, width: int):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(2 * width, feature_dim, 3, padding=1),
        )

    def forward(self, x):
        return self.layers(x)


class ConvFeatureExtractor:
    """Small convolutional encoder (stride 4) with a contrastive head."""

    kind = "contrastive"

    def __init__(self, feature_dim: int = 32, width: int = 16, seed: int = 0):
        self.feature_dim = int(feature_dim)
        self.stride = 4
        self.width = int(width)
        self.seed = int(seed)
        torch.manual_seed(seed)
        self.trunk = _ConvTrunk(feature_dim, width)
        self.head = nn.Sequential(
            nn.Linear(feature_dim, feature_dim), nn.SiLU(), nn.Linear(feature_dim, 32)
        )
        self.trunk.eval()
        self.trained = False

    def extract(self, image: np.ndarray) -> np.ndarray:
        image = _check_dims(image, self.stride)
        with torch.no_grad():
            feats = self.trunk(torch.from_numpy(image)[None])
        return feats[0].numpy()

    def save(self, path) -> None:
        meta = {
            "kind": 1,
            "feature_dim": self.feature_dim,
            "stride": self.stride,
            "width": self.width,
            "seed": self.seed,
            "trained": int(self.trained),
        }
        arrays = {f"trunk.{k}": v for k, v in state_dict_to_arrays(self.trunk).items()}
        arrays.update(
            {f"head.{k}": v for k, v in state_dict_to_arrays(self.head).items()}
        )
        write_container(path, EXTRACTOR_MAGIC, meta, arrays)


def load_extractor(path):
    """Load either extractor kind from a PPFX container."""
    _, _, meta, arrays = read_container(path, expect_magic=EXTRACTOR_MAGIC)
    if meta["kind"] == 0:
        ext = RandomProjectionExtractor(
            feature_dim=meta["feature_dim"], stride=meta["stride"], seed=meta["seed"]
        )
        ext.weight = arrays["weight"]
        return ext
    ext = ConvFeatureExtractor(
        feature_dim=meta["feature_dim"], width=meta["width"], seed=meta["seed"]
    )
    load_arrays_into(
        ext.trunk,
        {k[len("trunk.") :]: v for k, v in arrays.items() if k.startswith("trunk.")},
    )
    load_arrays_into(
        ext.head,
        {k[len("head.") :]: v for k, v in arrays.items() if k.startswith("head.")},
    )
    ext.trained = bool(meta["trained"])
    return ext


def extract_feature_map(image: np.ndarray, extractor) -> np.ndarray:
    """Feature map [d, H/s, W/s] for an RGB image, via the given extractor."""
    return extractor.extract(image)


def train_contrastive_extractor(
    extractor: ConvFeatureExtractor,
    corpus,
    epochs: int = 3,
    batch_size: int = 16,
    lr: float = 1e-3,
    temperature: float = 0.2,
    seed: int = 0,
) -> ConvFeatureExtractor:
    """Instance-discrimination pretraining (NT-Xent over two views).

    Each patch yields two augmented views; matching views are positives,
    everything else in the batch is a negative. Losses per epoch land in
    ``extractor.train_losses``.
    """
    if len(corpus) == 0:
        raise ParameterError("empty corpus")
    if not isinstance(extractor, ConvFeatureExtractor):
        raise ParameterError("only ConvFeatureExtractor is trainable")

    rng = np.random.default_rng(seed)
    params = list(extractor.trunk.parameters()) + list(extractor.head.parameters())
    opt = torch.optim.Adam(params, lr=lr)
    extractor.trunk.train()
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(corpus))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            if len(idx) < 2:
                continue
            views = []
            for i in idx:
                img = np.asarray(corpus[i].image, dtype=np.float32)
                dummy = np.zeros(img.shape[1:], dtype=np.uint8)
                for _view in range(2):
                    aug, _, _ = joint_augment(img, dummy, rng=rng, jitter=0.15)
                    views.append(aug)
            batch = torch.from_numpy(np.stack(views))
            feats = extractor.trunk(batch).mean(dim=(2, 3))
            z = F.normalize(extractor.head(feats), dim=1)
            loss = _nt_xent(z, temperature)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss)
            n_batches += 1
        losses.append(epoch_loss / max(n_batches, 1))
    extractor.trunk.eval()
    extractor.trained = True
    extractor.train_losses = losses
    return extractor


def _nt_xent(z: torch.Tensor, temperature: float) -> torch.Tensor:
    # Views are interleaved: rows 2i and 2i+1 are positives of each other.
    n = z.shape[0]
    sim = z @ z.T / temperature
    sim.fill_diagonal_(float("-inf"))
    targets = torch.arange(n) ^ 1
    return F.cross_entropy(sim, targets)
