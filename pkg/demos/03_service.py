# %% [markdown]
# # The localization service in-process
#
# A temporary data directory is seeded with a synthetic store, a model is
# trained over HTTP and one visitor walks through three rooms. The area
# only changes after three consecutive agreeing estimates.

# %%
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from wifiloc.io import save_store
from wifiloc.service import LocalizationService, ServiceConfig, create_app
from wifiloc.synthetic import generate_synthetic, museum_like_config

ds = generate_synthetic(museum_like_config(samples_per_location=30, seed=2))
data = Path(tempfile.mkdtemp()) / "data"
save_store(ds, data)
service = LocalizationService(ServiceConfig(data_dir=str(data), train_in_subprocess=False))
client = TestClient(create_app(service=service))

# %%
print(client.post("/api/v1/train", json={"seed": 42}).json())

# %%
by_loc = {}
for fp in ds.fingerprints:
    by_loc.setdefault(fp.location, []).append(fp)
walk = by_loc[1][:4] + by_loc[2][:4] + by_loc[1][4:8]
for i, fp in enumerate(walk):
    r = client.post("/api/v1/track", json={"device_id": "visitor", "ts_ms": i * 1000,
                                           "signals": fp.signals}).json()
    print(i, "estimate", r["location"], "area", r["smoothed_area"],
          "changed" if r["changed"] else "", "play" if r["first_visit"] else "")

# %% [markdown]
# Going back to room 1 changes the area again but does not replay its
# content: it was already visited in this session.

# %%
r = client.get("/api/v1/history", params={"device_id": "visitor", "limit": 3})
print(r.headers["x-total-count"], [row["smoothed_area"] for row in r.json()])
service.close()
