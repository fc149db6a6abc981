"""Probe whether embedding distance reflects shared semantics.

On tag-indicator embeddings the effect is visible by construction: the
more tags two images share, the closer they sit, and the probability
that a tag-sharing pair is farther apart than a random pair falls below
one half. The neighborhood block contrasts how many tags nearest
neighbors share (representation side) with the largest tag subset of an
anchor jointly carried by N other images (semantic side).
"""

import random

import numpy as np

from tagminer.core import ImageRecord
from tagminer.ingest import EmbeddingTable
from tagminer.latent import (
    distance_stats,
    format_distance_table,
    format_neighborhood_table,
    neighborhood_stats,
)
from tagminer.synth import image_embeddings

rng = random.Random(88)
vocab = [f"t{j:02d}" for j in range(20)]
records = [
    ImageRecord(
        f"img{i:04d}",
        "c",
        frozenset(t for t in vocab if rng.random() < 0.5),
        True,
        "train",
    )
    for i in range(500)
]
vectors = image_embeddings(records, dimension=20, noise_sigma=0.1, seed=88)
table = EmbeddingTable(list(vectors), np.asarray(list(vectors.values())))

stats = distance_stats(table, records, d_list=[0, 2, 4, 6, 8], n_pairs=20000, seed=7)
print(format_distance_table(stats))

neigh = neighborhood_stats(
    table, records, n_list=[20, 50], alpha_list=[0.6, 0.7, 0.8], n_anchors=200, seed=7
)
print(format_neighborhood_table(neigh))
