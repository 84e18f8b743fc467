# %% [markdown]
# # Meta-learner walkthrough
#
# The published museum survey is not bundled, so this walk uses the
# museum-like synthetic floor: 16 rooms, 15 dual-band APs, log-distance
# path loss with shadowing. Numbers here describe the surrogate only.

# %%
import numpy as np

from wifiloc.ensemble import localize, train_bundle
from wifiloc.fingerprints import Band, coverage_table
from wifiloc.synthetic import generate_synthetic, museum_like_config

ds = generate_synthetic(museum_like_config(samples_per_location=60, seed=11))
print(len(ds), "fingerprints,", len(ds.locations), "locations,", len(ds.registry), "radios")

# %% [markdown]
# Coverage: an AP covers a location when at least half of that location's
# scans hear it above -90 dBm.

# %%
cov = coverage_table(ds)
print("covering APs per location:", cov.covering_counts)

# %% [markdown]
# One bundle holds two meta-learners. The dual-band one sees all 30 radios,
# the 2.4 GHz one only the 15 radios on that band.

# %%
bundle = train_bundle(ds, seed=42)
print("dual features:", len(bundle.dual.feature_space))
print("2.4 GHz features:", len(bundle.only24.feature_space))

# %% [markdown]
# Youden's J per algorithm and location, computed on the validation split.
# Rows are algorithms; a weak row gets little say in the vote.

# %%
np.set_printoptions(precision=2, suppress=True, linewidth=140)
for alg, row in zip(bundle.dual.algorithms, bundle.dual.youden):
    print(f"{alg:>12}", row)
print("validation accuracy:", bundle.dual.report["val_accuracy"])

# %% [markdown]
# Routing: a scan with 5 GHz readings goes to the dual model. Dropping them
# sends the same scan to the 2.4 GHz model.

# %%
fp = ds.fingerprints[0]
print("truth", fp.location, "->", localize(bundle, fp).location, localize(bundle, fp).band.value)
only24 = fp.with_signals({m: v for m, v in fp.signals.items() if ds.registry[m] is Band.GHZ24})
res = localize(bundle, only24)
print("truth", fp.location, "->", res.location, res.band.value)
top = sorted(res.scores.items(), key=lambda kv: -kv[1])[:3]
print("top scores:", [(k, round(v, 3)) for k, v in top])
