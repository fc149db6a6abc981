"""Check that mined modes keep their accuracy drop on unseen data.

The synthetic generator draws an i.i.d. holdout split alongside the
training images. A mode generalizes when the holdout images selected
purely by its tags show a similar drop below the holdout class
baseline; the (train_drop, holdout_drop) pairs should hug y = x.
"""

from tagminer import MinerConfig, assemble, generalize, mine_exhaustive, split_records
from tagminer.evaluate import ablation_summary
from tagminer.synth import default_specs, generate_records

specs = default_specs(
    n_classes=5, plant_sizes=[1, 2, 3], n_images=2000, n_tags=20, seed=3, n_holdout=6000
)
records, _ = generate_records(specs, seed=3)
predictions = {r.id: r.correct for r in records}
parts = split_records(records)
train = assemble(parts["train"], predictions, freq_threshold=10)
holdout = assemble(parts["holdout"], predictions, freq_threshold=10)

config = MinerConfig(s=30, a=0.55, l=3, freq_threshold=10)
report = mine_exhaustive(train, config)
gen_records, summary = generalize(report, holdout, drop_thresholds=[0.25, 0.5])

print(f"{'mode':<40} {'train drop':>10} {'holdout drop':>13} {'support':>8}")
for rec in gen_records:
    label = rec.mode.description
    if rec.evaluable:
        print(
            f"{label:<40} {rec.train_drop:>9.1%} {rec.holdout_drop:>12.1%} "
            f"{rec.holdout_support:>8}"
        )
    else:
        print(f"{label:<40} {'(' + rec.flag + ')':>35}")

for threshold, fraction in summary["fraction_holdout_drop_at_least"].items():
    print(f"\nfraction of modes with holdout drop >= {threshold}: {fraction:.1%}")

# every proper subset of a 3-tag mode is easier than the full set
ablation = ablation_summary(report.modes, holdout, tag_count=3)
drops = ablation["mean_drop_by_size"]
print(
    f"ablation over {ablation['n_modes']} three-tag modes: "
    f"drop(3 tags) {drops['3']:.1%} > drop(2) {drops['2']:.1%} > drop(1) {drops['1']:.1%}"
)
