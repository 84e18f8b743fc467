"""Acceptance criteria, one pass/fail line each in the terminal summary.

Criteria 1 to 5 need the published museum dataset ingested into a store
(``wifiloc ingest``); point ``WIFILOC_MUSEUM_STORE`` at it to run them.
Without it they are reported as skipped and criterion 6 stands in.
"""
import asyncio
import os
import socket
import threading
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import record
from reference import tracker_reference
from wifiloc.classifiers import ALGORITHM_ORDER, make_classifier
from wifiloc.ensemble import (
    bundle_bytes,
    combine_scores,
    load_bundle,
    localize,
    sensitivity,
    specificity,
    train_bundle,
    train_meta,
    youden,
)
from wifiloc.evaluation import ConfusionMatrix, ap_ablation, evaluate_repeated, subsample_curve
from wifiloc.fingerprints import Band, BandProfile, Fingerprint, coverage_table, remove_aps
from wifiloc.io import load_store, save_store
from wifiloc.synthetic import generate_synthetic, museum_like_config
from wifiloc.tracker import TrackerConfig, TrackerState, update

from test_ensemble import shuffled_labels
from test_tracker import all_sequences, run as run_tracker

MUSEUM_ENV = "WIFILOC_MUSEUM_STORE"
PROPERTY_BUDGET_S = 120.0
_property_time = [0.0]


class timed:
    """Adds the block's wall time to the property-suite budget."""

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        _property_time[0] += time.perf_counter() - self.t0


def check(criterion: str, name: str, ok: bool, detail: str = "") -> None:
    record(criterion, name, "PASS" if ok else "FAIL", detail)
    assert ok, f"{criterion}, {name}: {detail}"


# -- criteria 1 to 5: published museum dataset ------------------------------------------

@pytest.fixture(scope="module")
def museum():
    path = os.environ.get(MUSEUM_ENV)
    if not path:
        reason = f"museum dataset not available (set {MUSEUM_ENV} to an ingested store)"
        for c, name in [(1, "dual-band mean >= 0.93"), (2, "2.4-only mean >= 0.87 and < dual"),
                        (3, "10 APs mean >= 0.91 with >= 3 covering APs"),
                        (4, "40% subsample mean >= 0.88, confusion peaks at 6/7/8"),
                        (5, "meta >= every classifier - 0.02")]:
            record(f"criterion {c}", name, "SKIP", reason)
        pytest.skip(reason)
    return load_store(Path(path))


@pytest.fixture(scope="module")
def museum_dual(museum):
    return evaluate_repeated(museum, BandProfile.DUAL, repeats=10, base_seed=42)


def test_criterion_1_dual_band_accuracy(museum_dual):
    m = museum_dual.stats.mean
    check("criterion 1", "dual-band mean >= 0.93", m >= 0.93, f"mean {m:.4f}")


def test_criterion_2_only24_accuracy(museum, museum_dual):
    res = evaluate_repeated(museum, BandProfile.ONLY24, repeats=10, base_seed=42)
    m, d = res.stats.mean, museum_dual.stats.mean
    check("criterion 2", "2.4-only mean >= 0.87 and < dual", m >= 0.87 and m < d,
          f"2.4-only {m:.4f}, dual {d:.4f}")


def test_criterion_3_ap_ablation(museum):
    [point] = ap_ablation(museum, [10], repeats=10, base_seed=42)
    sub = remove_aps(museum, point.info["removed_aps"])
    cover = min(coverage_table(sub).covering_counts.values())
    check("criterion 3", "10 APs mean >= 0.91 with >= 3 covering APs",
          point.stats.mean >= 0.91 and cover >= 3,
          f"mean {point.stats.mean:.4f}, min covering APs {cover}")


def test_criterion_4_subsampling(museum):
    [point] = subsample_curve(museum, [0.4], repeats=10, base_seed=42)
    mass = point.confusion.off_diagonal_mass()
    worst = max(mass, key=lambda k: (mass[k], -k))
    check("criterion 4", "40% subsample mean >= 0.88, confusion peaks at 6/7/8",
          point.stats.mean >= 0.88 and worst in (6, 7, 8),
          f"mean {point.stats.mean:.4f}, largest off-diagonal row {worst} ({mass[worst]:.3f})")


def test_criterion_5_ensemble_dominance(museum_dual):
    meta = museum_dual.stats.mean
    worst = {a: s.mean for a, s in museum_dual.model_stats.items() if s.mean - 0.02 > meta}
    best = max(s.mean for s in museum_dual.model_stats.values())
    check("criterion 5", "meta >= every classifier - 0.02", not worst,
          f"meta {meta:.4f}, best single {best:.4f}")


# -- criterion 6: property suite ----------------------------------------------------------

def test_criterion_6_arithmetic_examples():
    with timed():
        A, B = 1, 2
        ok = (sensitivity([A, B, B], [A, A, B], A) == 0.5
              and specificity([A, B, B], [A, A, B], A) == 1.0
              and sensitivity([B, B, B], [A, A, B], A) == 0.0
              and specificity([A, A, A], [A, A, B], A) == 0.0
              and youden(1.0, 1.0) == 1.0 and youden(0.5, 0.5) == 0.0
              and abs(youden(0.9, 0.8) - 0.7) <= 1e-15)
        q1 = combine_scores(np.array([[1.0, 0.0], [1.0, 0.0]]),
                            [np.array([0.6, 0.4]), np.array([0.8, 0.2])])[0]
        q2 = combine_scores(np.array([[-0.2, 0.0], [0.5, 0.0]]),
                            [np.array([0.9, 0.1]), np.array([0.1, 0.9])])[0]
        q0 = combine_scores(np.zeros((2, 2)), [np.array([0.6, 0.4]), np.array([0.8, 0.2])])
        ok = ok and q1 == 1.4 and q2 == 0.05 and (q0 == 0).all()
    check("criterion 6", "informedness and score examples", bool(ok),
          f"Q_A = {float(q1)!r} and {float(q2)!r} under clamping")


datasets = st.tuples(
    st.integers(2, 5),                      # locations
    st.integers(1, 6),                      # radios
    st.integers(3, 12),                     # fingerprints per location
    st.integers(0, 2 ** 32 - 1),            # rng seed
)


def test_criterion_6_distributions():
    cases = 0
    bad = []
    queries_per_fit = 60

    for alg in ALGORITHM_ORDER:
        @settings(max_examples=30)
        @given(datasets)
        def one(params):
            nonlocal cases
            k, d, n, seed = params
            rng = np.random.default_rng(seed)
            centers = rng.uniform(-90, -40, (k, d))
            X = np.concatenate([c + rng.normal(0, 6, (n, d)) for c in centers])
            X = np.clip(X, -100, -30)
            y = np.repeat(np.arange(1, k + 1), n)
            model = make_classifier(alg).fit(X, y, seed=int(seed % 1000))
            Q = np.concatenate([rng.uniform(-100, -30, (queries_per_fit - 3, d)),
                                np.full((1, d), -100.0), np.full((1, d), -30.0), X[:1]])
            P = model.predict_proba(Q)
            for row, q in zip(P, Q):
                dist = model.distribution(q)
                valid = (set(dist) == set(range(1, k + 1))
                         and all(0.0 <= v <= 1.0 and np.isfinite(v) for v in dist.values())
                         and abs(sum(dist.values()) - 1.0) <= 1e-9
                         and np.allclose(row, [dist[c] for c in range(1, k + 1)], atol=1e-12))
                if not valid:
                    bad.append((alg, params))
                cases += 1

        with timed():
            one()
    check("criterion 6", "classifier outputs are distributions", cases >= 10_000 and not bad,
          f"{cases} cases over {len(ALGORITHM_ORDER)} algorithms, {len(bad)} invalid")


def test_criterion_6_noiseless_fixture(noiseless_ds):
    with timed():
        res = evaluate_repeated(noiseless_ds, repeats=3, base_seed=42)
        meta = train_meta(noiseless_ds, seed=42)
    ok = res.stats.values == (1.0, 1.0, 1.0) and (meta.youden == 1.0).all()
    check("criterion 6", "noiseless fixture gives accuracy 1.0 and J = 1", ok,
          f"accuracies {res.stats.values}, J min {meta.youden.min()}")


def test_criterion_6_shuffled_labels(noisy_ds):
    with timed():
        means = [train_meta(shuffled_labels(noisy_ds, s), seed=s).youden.mean()
                 for s in range(10)]
    m = float(np.mean(means))
    check("criterion 6", "shuffled labels give |mean J| < 0.1 over 10 seeds", abs(m) < 0.1,
          f"mean J {m:+.4f}")


def test_criterion_6_tracker_brute_force():
    n = 0
    mismatches = 0
    with timed():
        for seq in all_sequences(8):
            _, out = run_tracker(seq)
            mismatches += out != tracker_reference(list(seq), 3, True)
            n += 1
    check("criterion 6", "tracker matches brute-force reference (length <= 8, 3 locations)",
          mismatches == 0 and n == sum(3 ** k for k in range(1, 9)),
          f"{n} sequences, {mismatches} mismatches")


def test_criterion_6_confusion_and_reruns(noisy_ds, small_museum_ds):
    with timed():
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(2000):
            t = rng.integers(1, 6, rng.integers(1, 60))
            p = rng.integers(1, 6, len(t))
            cm = ConfusionMatrix.from_predictions(t, p, range(1, 6))
            sums = cm.matrix.sum(axis=1)[cm.support > 0]
            worst = max(worst, float(np.abs(sums - 1.0).max()))
        a = evaluate_repeated(noisy_ds, repeats=3, base_seed=9)
        b = evaluate_repeated(noisy_ds, repeats=3, base_seed=9)
        same = (a.stats.values == b.stats.values
                and np.array_equal(a.confusion.matrix, b.confusion.matrix)
                and all(a.model_stats[k].values == b.model_stats[k].values for k in a.model_stats)
                and bundle_bytes(train_bundle(small_museum_ds, seed=9))
                == bundle_bytes(train_bundle(small_museum_ds, seed=9)))
    check("criterion 6", "confusion rows sum to 1 within 1e-9", worst <= 1e-9,
          f"max deviation {worst:.1e}")
    check("criterion 6", "seeded re-runs are bit-identical", same)


def test_criterion_6_time_budget():
    spent = _property_time[0]
    check("criterion 6", f"property suite within {PROPERTY_BUDGET_S:.0f} s",
          0 < spent <= PROPERTY_BUDGET_S, f"{spent:.1f} s")


# -- criterion 7: service contract ----------------------------------------------------------

N_DEVICES = 50
DWELL = 4          # scans per location along each device's walk
MIN_TICKS = 10
TICKS_AFTER_TRAIN = 3


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def device_walk(ds, registry, device: int, length: int):
    """Scans along a walk that dwells at each location; every fifth device
    has a 2.4 GHz-only radio."""
    rng = np.random.default_rng(1000 + device)
    by_loc = {}
    for fp in ds.fingerprints:
        by_loc.setdefault(fp.location, []).append(fp)
    locs = sorted(by_loc)
    walk = []
    loc = int(rng.choice(locs))
    while len(walk) < length:
        for _ in range(DWELL):
            fp = by_loc[loc][int(rng.integers(len(by_loc[loc])))]
            signals = fp.signals
            if device % 5 == 0:
                signals = {m: v for m, v in signals.items() if registry[m] is Band.GHZ24}
            walk.append(signals)
        loc = int(rng.choice(locs))
    return walk


class Harness:
    def __init__(self, data_dir: Path, ds):
        import uvicorn

        from wifiloc.service import LocalizationService, ServiceConfig, create_app
        self.ds = ds
        self.port = free_port()
        self.config = ServiceConfig(data_dir=str(data_dir), listen=f"127.0.0.1:{self.port}",
                                    train_in_subprocess=True)
        self.service = LocalizationService(self.config)
        self.service.train({"seed": 1})
        app = create_app(service=self.service)
        self.server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=self.port,
                                                    log_level="warning"))
        self.thread = threading.Thread(target=self.server.run, daemon=True)
        self.responses: dict[str, list] = {}
        self.train_window = None
        self.train_result = None

    def __enter__(self):
        self.thread.start()
        deadline = time.monotonic() + 30
        while not self.server.started:
            assert time.monotonic() < deadline, "server did not start"
            time.sleep(0.05)
        return self

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(30)

    async def device(self, client, i: int, walk, done: asyncio.Event, t0: float):
        device_id = f"device-{i:02d}"
        out = self.responses[device_id] = []
        tick = 0
        # stagger devices across the second
        await asyncio.sleep(i / N_DEVICES)
        while tick < len(walk):
            if tick >= MIN_TICKS and done.is_set() and tick >= self.ticks_at_install + TICKS_AFTER_TRAIN:
                break
            body = {"device_id": device_id, "ts_ms": 10_000_000 + tick * 1000,
                    "signals": walk[tick]}
            sent = time.monotonic()
            r = await client.post("/api/v1/track", json=body)
            got = time.monotonic()
            out.append((sent, got, body, r.status_code, r.json()))
            tick += 1
            await asyncio.sleep(max(0.0, t0 + tick + i / N_DEVICES - time.monotonic()))

    async def retrain(self, client, done: asyncio.Event, t0: float):
        await asyncio.sleep(2.0)
        start = time.monotonic()
        r = await client.post("/api/v1/train", json={"seed": 2}, timeout=300)
        self.train_window = (start, time.monotonic())
        self.ticks_at_install = int(time.monotonic() - t0) + 1
        self.train_result = (r.status_code, r.json())
        done.set()

    async def drive(self, walk_length: int = 60):
        import httpx

        self.ticks_at_install = 10 ** 9
        registry = self.ds.registry
        walks = [device_walk(self.ds, registry, i, walk_length) for i in range(N_DEVICES)]
        done = asyncio.Event()
        limits = httpx.Limits(max_connections=N_DEVICES + 5)
        async with httpx.AsyncClient(base_url=f"http://127.0.0.1:{self.port}", limits=limits,
                                     timeout=60) as client:
            t0 = time.monotonic()
            await asyncio.gather(self.retrain(client, done, t0),
                                 *(self.device(client, i, w, done, t0)
                                   for i, w in enumerate(walks)))


@pytest.fixture(scope="module")
def service_run(tmp_path_factory):
    from wifiloc.service import LocalizationService
    ds = generate_synthetic(museum_like_config(samples_per_location=100, seed=21))
    data = save_store(ds, tmp_path_factory.mktemp("service") / "data")
    harness = Harness(data, ds)
    with harness:
        asyncio.run(harness.drive())
        before = {
            "fingerprints": harness.service.store.fingerprints.records(),
            "predictions": harness.service.store.predictions.records(),
            "model": harness.service.model_info(),
        }
    # the app's shutdown closed the service and flushed its logs
    again = LocalizationService(harness.config)
    after = {
        "fingerprints": again.store.fingerprints.records(),
        "predictions": again.store.predictions.records(),
        "model": again.model_info(),
    }
    harness.restarted = again
    yield harness, before, after
    again.close()


def test_criterion_7_retrain_ran_concurrently(service_run):
    h, _, _ = service_run
    status, body = h.train_result
    start, end = h.train_window
    during = sum(start <= sent <= end for rs in h.responses.values() for sent, *_ in rs)
    ok = status == 200 and body["version"] == 2 and during > 0
    check("criterion 7", "retrain overlapped live tracking", ok,
          f"train {end - start:.1f} s, {during} tracks sent during it")


def test_criterion_7_versions_fully_installed(service_run):
    h, _, _ = service_run
    bundles = {v: load_bundle(h.service.store.model_path(v)) for v in (1, 2)}
    total = errors = regressions = 0
    seen = set()
    for rs in h.responses.values():
        last = 0
        for _, _, body, status, resp in rs:
            total += 1
            if status != 200 or resp.get("model_version") not in bundles:
                errors += 1
                continue
            v = resp["model_version"]
            seen.add(v)
            regressions += v < last
            last = v
            # the response must be exactly what the complete bundle of that version answers
            res = localize(bundles[v], Fingerprint({m: float(x) for m, x in body["signals"].items()},
                                                   None, body["device_id"]))
            if res.location != resp["location"] or \
                    {str(k): s for k, s in res.scores.items()} != resp["scores"]:
                errors += 1
    ok = errors == 0 and regressions == 0 and seen == {1, 2}
    check("criterion 7", "every /track answer comes from a fully installed model_version", ok,
          f"{total} responses, versions {sorted(seen)}, {errors} inconsistent, "
          f"{regressions} version regressions")


def test_criterion_7_smoothing_matches_replay(service_run):
    h, before, _ = service_run
    cfg = TrackerConfig(h.config.smoothing_streak, h.config.play_once_per_session)
    mismatched = []
    logged = {}
    for rec in before["predictions"]:
        logged.setdefault(rec["device_id"], []).append(rec)
    for device, rs in h.responses.items():
        state = TrackerState()
        for _, _, _, _, resp in rs:
            state, changed, first = update(state, resp["location"], cfg)
            if (state.current, changed, first) != (resp["smoothed_area"], resp["changed"],
                                                  resp["first_visit"]):
                mismatched.append(device)
                break
        if [r for *_, r in rs] != logged.get(device):
            mismatched.append(device)
    ok = not mismatched and len(h.responses) == N_DEVICES
    check("criterion 7", "per-device smoothed areas match an offline tracker replay", ok,
          f"{len(h.responses)} devices, {len(set(mismatched))} mismatched")


def test_criterion_7_restart_state(service_run):
    h, before, after = service_run
    n = len(before["predictions"])
    ok = after == before and h.restarted.installed[0] == 2 and n > 0
    check("criterion 7", "post-restart state equals pre-restart state", ok,
          f"{len(before['fingerprints'])} fingerprints, {n} predictions, "
          f"model version {h.restarted.installed[0]}")


def test_criterion_7_latency_report(service_run):
    h, _, _ = service_run
    start, end = h.train_window
    lat = np.array([got - sent for rs in h.responses.values() for sent, got, *_ in rs]) * 1000
    quiet = np.array([got - sent for rs in h.responses.values() for sent, got, *_ in rs
                      if not start <= sent <= end]) * 1000
    # reported, not asserted: training shares the machine with the server
    record("criterion 7", "latency p99 (reported)", "INFO",
           f"all {np.percentile(lat, 99):.0f} ms, outside training "
           f"{np.percentile(quiet, 99):.0f} ms, {os.cpu_count()} CPU")
