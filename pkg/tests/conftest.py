import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from wifiloc.fingerprints import Band, Dataset, Fingerprint  # noqa: E402
from wifiloc.synthetic import generate_synthetic, grid_config, museum_like_config  # noqa: E402

settings.register_profile(
    "default", deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance criterion -> list of (check name, passed, detail)
ACCEPTANCE: dict[str, list[tuple[str, str, str]]] = {}


def record(criterion: str, check: str, status: str, detail: str = "") -> None:
    ACCEPTANCE.setdefault(criterion, []).append((check, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: int(c.split()[-1])):
        checks = ACCEPTANCE[crit]
        statuses = {s for _, s, _ in checks}
        overall = "FAIL" if "FAIL" in statuses else ("SKIP" if statuses == {"SKIP"} else "PASS")
        tr.write_line(f"{crit}: {overall}")
        for name, status, detail in checks:
            tr.write_line(f"    [{status}] {name}" + (f": {detail}" if detail else ""))


@pytest.fixture(scope="session")
def tiny_ds() -> Dataset:
    """Hand-written dual-band dataset: 2 locations, 2 APs, 4 radios."""
    a24, a5, b24, b5 = ("aa:00:00:00:00:01", "aa:00:00:00:00:02",
                        "bb:00:00:00:00:01", "bb:00:00:00:00:02")
    fps = []
    for i in range(6):
        fps.append(Fingerprint({a24: -40.0 - i, a5: -50.0 - i, b24: -80.0}, 1, "d", i))
        fps.append(Fingerprint({b24: -42.0 - i, b5: -55.0 - i, a24: -85.0}, 2, "d", 100 + i))
    registry = {a24: Band.GHZ24, a5: Band.GHZ5, b24: Band.GHZ24, b5: Band.GHZ5}
    aps = {a24: "A", a5: "A", b24: "B", b5: "B"}
    return Dataset(tuple(fps), {1: "hall", 2: "room"}, registry, aps)


@pytest.fixture(scope="session")
def noiseless_ds() -> Dataset:
    return generate_synthetic(grid_config(cells=4, aps=3, sigma_db=0.0, samples=60, seed=1))


@pytest.fixture(scope="session")
def noisy_ds() -> Dataset:
    return generate_synthetic(grid_config(cells=4, aps=3, sigma_db=8.0, samples=120, seed=5))


@pytest.fixture(scope="session")
def small_museum_ds() -> Dataset:
    return generate_synthetic(museum_like_config(samples_per_location=60, seed=11))
