"""Synthetic bytecode corpora with planted color motifs.

Background bytes stay in the dark range [0, 64); each bug label plants a
contiguous run of one saturated repeating 3-byte color, so the resulting
images carry an unmistakable colored streak per label. Used for overfit
sanity runs and the end-to-end multi-label suite where no real labeled
corpus exists.
"""

from __future__ import annotations

import numpy as np

from .ingest import ContractRecord, DatasetManifest, LabelVocabulary

BINARY_MOTIF = (240, 240, 240)

# one saturated color per label, distinguishable after channel mixing
LABEL_MOTIFS = (
    (230, 40, 40),
    (40, 230, 40),
    (40, 40, 230),
    (230, 230, 40),
)

MOTIF_VOCABULARY = LabelVocabulary(
    ("MotifRed", "MotifGreen", "MotifBlue", "MotifYellow"), version="synthetic-4"
)


def _background(rng: np.random.Generator, n_pixels: int) -> np.ndarray:
    return rng.integers(0, 64, size=(n_pixels, 3), dtype=np.uint8)


def _plant(pixels: np.ndarray, color: tuple[int, int, int], run: int,
           rng: np.random.Generator) -> None:
    start = int(rng.integers(0, len(pixels) - run + 1))
    pixels[start : start + run] = color


def _record(pixels: np.ndarray, labels: tuple[int, ...]) -> ContractRecord:
    return ContractRecord(
        bytecode=pixels.tobytes(), labels=labels, source="synthetic"
    )


def binary_motif_manifest(
    n: int = 64, side: int = 128, seed: int = 0, motif_fraction: float = 0.1
) -> DatasetManifest:
    """n records, half clean and half with one planted bright run; all in train."""
    rng = np.random.default_rng(seed)
    run = max(1, int(side * side * motif_fraction))
    vocab = LabelVocabulary(("PlantedMotif",), version="synthetic-1")
    records = []
    for i in range(n):
        pixels = _background(rng, side * side)
        buggy = i % 2 == 1
        if buggy:
            _plant(pixels, BINARY_MOTIF, run, rng)
        records.append(_record(pixels, (1 if buggy else 0,)))
    return DatasetManifest(tuple(records), vocab, ("train",) * n)


def multilabel_motif_manifest(
    n_train: int = 512,
    n_test: int = 128,
    side: int = 64,
    seed: int = 0,
    motif_fraction: float = 0.08,
    clean_fraction: float = 0.25,
) -> DatasetManifest:
    """Four motif labels; buggy samples carry 1-2 motifs, the rest are clean."""
    rng = np.random.default_rng(seed)
    run = max(1, int(side * side * motif_fraction))
    records = []
    splits = []
    for split, count in (("train", n_train), ("test", n_test)):
        for _ in range(count):
            pixels = _background(rng, side * side)
            labels = [0, 0, 0, 0]
            if rng.random() >= clean_fraction:
                k = int(rng.integers(1, 3))
                for j in rng.choice(4, size=k, replace=False):
                    _plant(pixels, LABEL_MOTIFS[j], run, rng)
                    labels[j] = 1
            records.append(_record(pixels, tuple(labels)))
            splits.append(split)
    return DatasetManifest(tuple(records), MOTIF_VOCABULARY, tuple(splits))
