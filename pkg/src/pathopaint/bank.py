"""Regional foreground embeddings: mask pooling, clustering and sampling.

Each patch with enough foreground contributes one embedding: its feature
map averaged over the latent cells the (downsampled) mask activates.
Embeddings are clustered with seeded k-means; generation then draws a
donor embedding from the same cluster as the recipient but from a
different source image.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cluster import kmeans
from .container import BANK_MAGIC, FORMAT_VERSION
from .errors import (
    EmptyBankError,
    EmptyRegionError,
    ExhaustedClusterError,
    ParameterError,
    ShapeError,
)
from .masks import downsample_mask
from .utils import as_rng

UNASSIGNED = -1

FALLBACK_POLICIES = ("error", "nearest_other_cluster", "reuse_self")


@dataclass
class RegionalEmbedding:
    """One pooled foreground feature vector plus its provenance."""

    vector: np.ndarray
    source_image_id: str
    patch_id: str
    cluster_id: int = UNASSIGNED
    fg_pixel_count: int = 0


@dataclass
class EmbeddingBank:
    """All regional embeddings, optionally clustered into k groups."""

    embeddings: list[RegionalEmbedding] = field(default_factory=list)
    k: int = 0
    centroids: np.ndarray | None = None
    seed: int = 0
    normalized: bool = True

    def __len__(self) -> int:
        return len(self.embeddings)

    @property
    def clustered(self) -> bool:
        return self.centroids is not None

    def entry_for(self, patch_id: str) -> RegionalEmbedding:
        for e in self.embeddings:
            if e.patch_id == patch_id:
                return e
        raise ParameterError(f"no bank entry for patch {patch_id!r}")

    def cluster_members(self, cluster_id: int) -> list[RegionalEmbedding]:
        return [e for e in self.embeddings if e.cluster_id == cluster_id]

    def vectors(self) -> np.ndarray:
        return np.stack([e.vector for e in self.embeddings])


def mask_pool(feature_map: np.ndarray, mask: np.ndarray, stride: int) -> np.ndarray:
    """Average feature-map cells whose downsampled-mask cells are active.

    The pixel mask is reduced to the feature-map grid with the same
    any-pixel rule used for latent masks, then the mean feature vector
    over active cells is returned.
    """
    feature_map = np.asarray(feature_map)
    if feature_map.ndim != 3:
        raise ShapeError(f"feature map must be [d, h, w], got {feature_map.shape}")
    pooled_mask = downsample_mask(np.asarray(mask), stride)[0]
    if pooled_mask.shape != feature_map.shape[1:]:
        raise ShapeError(
            f"mask {mask.shape} at stride {stride} gives grid {pooled_mask.shape}, "
            f"feature map has {feature_map.shape[1:]}"
        )
    active = pooled_mask.astype(bool)
    if not active.any():
        raise EmptyRegionError("mask has no active cells after downsampling")
    return feature_map[:, active].mean(axis=1)


def build_bank(
    dataset,
    extractor,
    min_fg_fraction: float = 0.01,
    normalize: bool = True,
    seed: int = 0,
) -> EmbeddingBank:
    """One embedding per patch whose foreground fraction clears the bar.

    Output order is canonical (sorted by patch_id) so the bank is
    independent of dataset ordering.
    """
    if len(dataset) == 0:
        raise ParameterError("empty dataset")
    entries = []
    for patch in sorted(dataset, key=lambda p: p.patch_id):
        mask = np.asarray(patch.mask)
        fg = int(mask.sum())
        if fg / mask.size < min_fg_fraction:
            continue
        feats = extractor.extract(np.asarray(patch.image, dtype=np.float32))
        vec = mask_pool(feats, mask, extractor.stride).astype(np.float32)
        if normalize:
            norm = float(np.linalg.norm(vec))
            if norm > 0:
                vec = vec / norm
        entries.append(
            RegionalEmbedding(
                vector=vec,
                source_image_id=patch.source_image_id,
                patch_id=patch.patch_id,
                fg_pixel_count=fg,
            )
        )
    if not entries:
        raise EmptyBankError(
            f"no patch reached min_fg_fraction={min_fg_fraction}"
        )
    return EmbeddingBank(embeddings=entries, seed=seed, normalized=normalize)


def cluster_bank(
    bank: EmbeddingBank, k: int, seed: int = 0, max_iters: int = 100
) -> EmbeddingBank:
    """Cluster the bank's vectors with seeded k-means (in place)."""
    if len(bank) < k:
        raise ParameterError(f"bank has {len(bank)} embeddings, need >= k={k}")
    centroids, labels, history = kmeans(bank.vectors(), k, seed, max_iters=max_iters)
    for e, label in zip(bank.embeddings, labels):
        e.cluster_id = int(label)
    bank.k = int(k)
    bank.seed = int(seed)
    bank.centroids = centroids
    bank.inertia_history = history
    return bank


def sample_embedding(
    bank: EmbeddingBank,
    query: RegionalEmbedding,
    rng_seed,
    fallback: str = "nearest_other_cluster",
) -> RegionalEmbedding:
    """Draw a donor embedding: same cluster, different source image.

    The draw is uniform over eligible candidates and deterministic given
    the seed. When the query's cluster has no candidate from another
    image, ``fallback`` decides: raise, walk to the nearest other
    cluster (by centroid distance) that has one, or reuse the query.
    """
    if fallback not in FALLBACK_POLICIES:
        raise ParameterError(f"unknown fallback policy {fallback!r}")
    if not bank.clustered:
        raise ParameterError("bank is not clustered")
    if not (0 <= query.cluster_id < bank.k):
        raise ParameterError(f"query cluster_id {query.cluster_id} not in bank")
    rng = as_rng(rng_seed)

    def eligible(cluster_id: int) -> list[RegionalEmbedding]:
        return [
            e
            for e in bank.cluster_members(cluster_id)
            if e.source_image_id != query.source_image_id
        ]

    candidates = eligible(query.cluster_id)
    if candidates:
        return candidates[int(rng.integers(len(candidates)))]

    if fallback == "error":
        raise ExhaustedClusterError(
            f"cluster {query.cluster_id} has no donor outside image "
            f"{query.source_image_id!r}"
        )
    if fallback == "reuse_self":
        return query

    # nearest_other_cluster: try clusters by centroid distance, ascending.
    dists = np.linalg.norm(bank.centroids - bank.centroids[query.cluster_id], axis=1)
    for cluster_id in np.argsort(dists, kind="stable"):
        if int(cluster_id) == query.cluster_id:
            continue
        candidates = eligible(int(cluster_id))
        if candidates:
            return candidates[int(rng.integers(len(candidates)))]
    raise ExhaustedClusterError(
        f"no cluster has a donor outside image {query.source_image_id!r}"
    )


def save_bank(bank: EmbeddingBank, path) -> None:
    """Serialize to the PPEB container (little-endian throughout)."""
    if len(bank) == 0:
        raise ParameterError("refusing to save an empty bank")
    d = bank.embeddings[0].vector.shape[0]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(BANK_MAGIC)
        f.write(
            struct.pack(
                "<IIIIqB",
                FORMAT_VERSION,
                len(bank),
                d,
                bank.k,
                bank.seed,
                int(bank.normalized),
            )
        )
        for e in bank.embeddings:
            for s in (e.patch_id, e.source_image_id):
                raw = s.encode("utf-8")
                f.write(struct.pack("<H", len(raw)))
                f.write(raw)
            f.write(struct.pack("<iI", int(e.cluster_id), int(e.fg_pixel_count)))
            f.write(np.asarray(e.vector, dtype="<f4").tobytes())
        if bank.centroids is not None:
            f.write(np.asarray(bank.centroids, dtype="<f4").tobytes())


def load_bank(path) -> EmbeddingBank:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != BANK_MAGIC:
            raise ParameterError(f"bad magic {magic!r}, expected {BANK_MAGIC!r}")
        version, count, d, k, seed, normalized = struct.unpack("<IIIIqB", f.read(21))
        if version > FORMAT_VERSION:
            raise ParameterError(f"unsupported bank version {version}")
        embeddings = []
        for _ in range(count):
            strings = []
            for _ in range(2):
                (n,) = struct.unpack("<H", f.read(2))
                strings.append(f.read(n).decode("utf-8"))
            cluster_id, fg_count = struct.unpack("<iI", f.read(8))
            vec = np.frombuffer(f.read(4 * d), dtype="<f4").copy()
            embeddings.append(
                RegionalEmbedding(
                    vector=vec,
                    patch_id=strings[0],
                    source_image_id=strings[1],
                    cluster_id=cluster_id,
                    fg_pixel_count=fg_count,
                )
            )
        centroids = None
        if k > 0:
            centroids = (
                np.frombuffer(f.read(4 * k * d), dtype="<f4")
                .reshape(k, d)
                .astype(np.float64)
            )
    return EmbeddingBank(
        embeddings=embeddings,
        k=k,
        centroids=centroids,
        seed=seed,
        normalized=bool(normalized),
    )
