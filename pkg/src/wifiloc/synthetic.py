"""
Synthetic fingerprints from a log-distance path-loss model.

Test fixture only: each location is a polygon on a flat floor, access points
are points, and the RSSI of a radio at distance ``d`` metres is::

    P_ref - 10 * n * log10(max(d, 1)) + Normal(0, sigma)

clamped to [-100, -30] dBm; readings below -95 dBm are treated as invisible.
Dual-band APs get a second (5 GHz) radio with ``band5_loss_db`` of extra
attenuation.  Walls are approximated by ``room_shadowing_db``: every
(room, radio) pair gets one fixed Normal(0, room_shadowing_db) offset, and
cells of the same room share it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .fingerprints import Band, Dataset, Fingerprint

CLAMP_LOW, CLAMP_HIGH = -100.0, -30.0
INVISIBLE_BELOW = -95.0


def rectangle(x0, y0, x1, y1):
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


@dataclass(frozen=True)
class SyntheticConfig:
    width: float
    height: float
    aps: tuple[tuple[float, float], ...]
    cells: tuple[tuple[tuple[float, float], ...], ...]
    path_loss_exponent: float = 2.5
    ref_power_dbm: float = -40.0
    sigma_db: float = 6.0
    samples_per_location: int | tuple[int, ...] = 200
    seed: int = 0
    dual_band: bool = True
    band5_loss_db: float = 6.0
    round_dbm: bool = False
    room_shadowing_db: float = 0.0
    rooms: tuple[int, ...] = ()
    names: tuple[str, ...] = field(default=())

    def validate(self):
        if len(self.cells) < 2:
            raise DataError("need at least two location cells")
        if len(self.aps) < 1:
            raise DataError("need at least one AP")
        if self.sigma_db < 0 or self.room_shadowing_db < 0:
            raise DataError("sigma must be non-negative")
        if self.rooms and len(self.rooms) != len(self.cells):
            raise DataError("rooms must give one room per cell")
        if self.width <= 0 or self.height <= 0:
            raise DataError("floor dimensions must be positive")
        for i, poly in enumerate(self.cells, 1):
            pts = np.asarray(poly, dtype=float)
            if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
                raise DataError(f"cell {i} is not a polygon")
            if abs(_area(pts)) <= 0:
                raise DataError(f"cell {i} has zero area")
            if pts[:, 0].min() < 0 or pts[:, 1].min() < 0 \
                    or pts[:, 0].max() > self.width or pts[:, 1].max() > self.height:
                raise DataError(f"cell {i} lies outside the floor")
        counts = self.counts()
        if min(counts) < 1:
            raise DataError("every location needs at least one sample")

    def counts(self) -> list[int]:
        s = self.samples_per_location
        if isinstance(s, int):
            return [s] * len(self.cells)
        if len(s) != len(self.cells):
            raise DataError("samples_per_location must match the number of cells")
        return list(s)


def _area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def inside(points: np.ndarray, poly) -> np.ndarray:
    """Even-odd ray casting test."""
    poly = np.asarray(poly, dtype=float)
    x, y = points[:, 0], points[:, 1]
    res = np.zeros(len(points), dtype=bool)
    j = len(poly) - 1
    for i in range(len(poly)):
        xi, yi = poly[i]
        xj, yj = poly[j]
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (xj - xi) * (y - yi) / (yj - yi) + xi
        res ^= crosses & (x < xint)
        j = i
    return res


def sample_cell(poly, n: int, rng: np.random.Generator) -> np.ndarray:
    pts = np.asarray(poly, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    out = []
    got = 0
    while got < n:
        cand = rng.uniform(lo, hi, size=(max(2 * (n - got), 16), 2))
        cand = cand[inside(cand, pts)]
        out.append(cand)
        got += len(cand)
    return np.vstack(out)[:n]


def path_loss_rssi(distance, ref_power_dbm: float, exponent: float) -> np.ndarray:
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    return ref_power_dbm - 10.0 * exponent * np.log10(d)


def radio_macs(n_aps: int, dual_band: bool) -> list[tuple[str, Band, str]]:
    """(mac, band, ap id) for every synthetic radio."""
    radios = []
    for a in range(n_aps):
        ap = f"ap{a + 1:02d}"
        radios.append((f"02:00:00:00:{a + 1:02x}:24", Band.GHZ24, ap))
        if dual_band:
            radios.append((f"02:00:00:00:{a + 1:02x}:50", Band.GHZ5, ap))
    return radios


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    radios = radio_macs(len(cfg.aps), cfg.dual_band)
    ap_xy = np.asarray(cfg.aps, dtype=float)
    src = np.array([int(ap[2:]) - 1 for _, _, ap in radios])
    offset = np.array([cfg.band5_loss_db if b == Band.GHZ5 else 0.0 for _, b, _ in radios])
    macs = [m for m, _, _ in radios]
    rooms = cfg.rooms or tuple(range(len(cfg.cells)))
    room_ids = sorted(set(rooms))
    room_offset = rng.normal(0.0, cfg.room_shadowing_db, size=(len(room_ids), len(radios))) \
        if cfg.room_shadowing_db > 0 else np.zeros((len(room_ids), len(radios)))

    fps = []
    for loc, (poly, n) in enumerate(zip(cfg.cells, cfg.counts()), 1):
        pts = sample_cell(poly, n, rng)
        dist = np.linalg.norm(pts[:, None, :] - ap_xy[src][None, :, :], axis=2)
        rssi = path_loss_rssi(dist, cfg.ref_power_dbm, cfg.path_loss_exponent) - offset
        rssi = rssi + room_offset[room_ids.index(rooms[loc - 1])]
        if cfg.sigma_db > 0:
            rssi = rssi + rng.normal(0.0, cfg.sigma_db, size=rssi.shape)
        rssi = np.clip(rssi, CLAMP_LOW, CLAMP_HIGH)
        if cfg.round_dbm:
            rssi = np.round(rssi)
        for row in rssi:
            signals = {macs[j]: float(v) for j, v in enumerate(row) if v >= INVISIBLE_BELOW}
            if signals:
                fps.append(Fingerprint(signals, loc, f"synth-{loc}", len(fps)))

    seen = {m for fp in fps for m in fp.signals}
    registry = {m: b for m, b, _ in radios if m in seen}
    aps = {m: ap for m, _, ap in radios if m in seen}
    names = cfg.names or tuple(f"cell {i}" for i in range(1, len(cfg.cells) + 1))
    return Dataset(tuple(fps), {i: names[i - 1] for i in range(1, len(cfg.cells) + 1)},
                   registry, aps)


def grid_config(cells: int = 4, aps: int = 3, sigma_db: float = 6.0, samples: int = 200,
                seed: int = 0, cell_size: float = 10.0, gap: float = 10.0,
                **kwargs) -> SyntheticConfig:
    """Cells of ``cell_size`` metres in a row separated by ``gap``; APs spread
    evenly along a line above them."""
    width = cells * cell_size + (cells + 1) * gap
    height = cell_size + 2 * gap
    polys = tuple(
        rectangle(gap + i * (cell_size + gap), gap, gap + i * (cell_size + gap) + cell_size,
                  gap + cell_size)
        for i in range(cells))
    xs = np.linspace(gap, width - gap, aps) if aps > 1 else np.array([width / 2])
    ap_pos = tuple((float(x), float(height - gap / 2)) for x in xs)
    return SyntheticConfig(width, height, ap_pos, polys, sigma_db=sigma_db,
                           samples_per_location=samples, seed=seed, **kwargs)


# more scans were taken in the open hall (areas 6-8); about 20,000 in total
MUSEUM_COUNTS = (1100, 1000, 1100, 1000, 1200, 1500, 1500, 1500,
                 1300, 1200, 1100, 1300, 1300, 1300, 1300, 800)


def museum_like_config(samples_per_location: int | tuple[int, ...] = MUSEUM_COUNTS,
                       sigma_db: float = 6.0, room_shadowing_db: float = 6.0, seed: int = 0,
                       **kwargs) -> SyntheticConfig:
    """A 16-area, 15 dual-band AP floor loosely shaped like a gallery.

    Areas 6, 7 and 8 are neighbouring zones of one open hall (no walls
    between them), so they are the hardest to tell apart.
    """
    cells = [
        rectangle(0, 0, 15, 12), rectangle(15, 0, 30, 12), rectangle(30, 0, 45, 12),
        rectangle(45, 0, 60, 12), rectangle(60, 0, 75, 12),
        rectangle(0, 12, 12, 26),
        rectangle(12, 14, 20, 24), rectangle(20, 14, 28, 24), rectangle(28, 14, 36, 24),
        rectangle(40, 12, 58, 26), rectangle(60, 12, 75, 26),
        rectangle(0, 26, 18, 40), rectangle(18, 26, 36, 40), rectangle(36, 26, 54, 40),
        rectangle(54, 26, 75, 40),
        rectangle(80, 30, 95, 40),  # outside the building
    ]
    # renumber so that the hall zones get ids 6, 7, 8
    order = [0, 1, 2, 3, 4, 6, 7, 8, 5, 9, 10, 11, 12, 13, 14, 15]
    cells = tuple(cells[i] for i in order)
    aps = ((7, 6), (30, 6), (52, 6), (70, 4), (6, 19), (24, 12.5), (50, 19), (68, 19),
           (9, 33), (27, 33), (45, 33), (64, 33), (37, 20), (77, 22), (88, 38))
    rooms = (0, 1, 2, 3, 4, 5, 5, 5, 6, 7, 8, 9, 10, 11, 12, 13)
    return SyntheticConfig(96, 42, aps, cells, sigma_db=sigma_db, seed=seed,
                           samples_per_location=samples_per_location, round_dbm=True,
                           room_shadowing_db=room_shadowing_db, rooms=rooms, **kwargs)
