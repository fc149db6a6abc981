"""Score mode descriptions in a shared image/text embedding space.

Synthetic embeddings place each image at its tag-indicator vector plus
noise, and each description at the exact indicator of its tag set, so a
good description scores high on its members (mean similarity), tight
(low std), and specific (high inside-vs-outside AUROC).
"""

import numpy as np

from tagminer import MinerConfig, assemble, mine_exhaustive, score_modes, split_records
from tagminer.ingest import EmbeddingTable
from tagminer.synth import (
    default_specs,
    description_embeddings,
    generate_records,
    image_embeddings,
    vocabulary_of,
)

specs = default_specs(n_classes=4, plant_sizes=[2, 3], n_images=1500, n_tags=16, seed=5)
records, _ = generate_records(specs, seed=5)
dataset = assemble(
    split_records(records)["train"], {r.id: r.correct for r in records}, 10
)
config = MinerConfig(s=30, a=0.55, l=3, freq_threshold=10)
report = mine_exhaustive(dataset, config)

vocab = vocabulary_of(records)
images = image_embeddings(records, dimension=len(vocab), noise_sigma=0.05, seed=5)
descriptions = description_embeddings(
    {m.description: list(m.tags) for m in report.modes}, vocab, len(vocab)
)
image_table = EmbeddingTable(list(images), np.asarray(list(images.values())))
desc_table = EmbeddingTable(list(descriptions), np.asarray(list(descriptions.values())))

quality = score_modes(report, image_table, desc_table, dataset, seed=5)
print(f"{'mode':<38} {'mean sim':>9} {'std':>7} {'auroc':>7} {'in/out':>9}")
for row in quality.per_mode:
    print(
        f"{row.description:<38} {row.mean_sim:>9.3f} {row.std_sim:>7.3f} "
        f"{row.auroc:>7.3f} {row.n_inside:>4}/{row.n_outside}"
    )
print(
    f"\npooled mean {quality.pooled_mean_sim:.3f}, pooled std "
    f"{quality.pooled_std_sim:.3f}, mean auroc {quality.mean_auroc:.3f}"
)
