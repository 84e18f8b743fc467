# %% [markdown]
# # Repeated evaluation, AP ablation and subsampling
#
# Same surrogate floor as the first demo. Each run resplits the data
# 70/20/10 with its own seed; the statistics are over test-split accuracy.

# %%
from wifiloc.evaluation import ap_ablation, evaluate_repeated, subsample_curve
from wifiloc.synthetic import generate_synthetic, museum_like_config

ds = generate_synthetic(museum_like_config(samples_per_location=60, seed=11))

# %%
dual = evaluate_repeated(ds, "dual", repeats=5, base_seed=42)
only24 = evaluate_repeated(ds, "2.4", repeats=5, base_seed=42)
print("dual    ", dual.stats.summary())
print("2.4 only", only24.stats.summary())
print("single models:", {a: round(s.mean, 3) for a, s in dual.model_stats.items()})

# %% [markdown]
# Rooms whose scans are most often put elsewhere (off-diagonal row mass of
# the mean confusion matrix).

# %%
mass = dual.confusion.off_diagonal_mass()
print(sorted(mass.items(), key=lambda kv: -kv[1])[:4])

# %% [markdown]
# AP ablation removes the most redundant APs first, so coverage thins out
# evenly before any room loses its last covering AP.

# %%
for p in ap_ablation(ds, [15, 12, 10, 6, 3], repeats=3, base_seed=42):
    print(f"{p.x:>3.0f} APs  mean {p.stats.mean:.3f}  min covering {p.info['min_covering_aps']}")

# %%
for p in subsample_curve(ds, [0.2, 0.4, 0.7, 1.0], repeats=3, base_seed=42):
    print(f"{p.x:.0%} of scans ({p.info['fingerprints']})  mean {p.stats.mean:.3f}")
