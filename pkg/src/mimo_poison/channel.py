"""Parametric urban scene -> per-user channel features.

Propagation uses the image method over axis-aligned box buildings (four
vertical walls each) and the ground plane. Every user keeps only its
strongest path; users with no path at all are dropped and counted.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .dataset import Record, RecordSet
from .errors import ConfigError, DomainError, EmptyDatasetError

C = 299_792_458.0


def free_space_pathloss(distance, freq):
    """Free-space loss in dB, ``20 log10(4 pi d f / c)``. Accepts scalars or arrays."""
    d = np.asarray(distance, dtype=np.float64)
    f = np.asarray(freq, dtype=np.float64)
    if np.any(~(d > 0)) or np.any(~(f > 0)):
        raise DomainError("distance and frequency must be positive")
    out = 20.0 * np.log10(4.0 * math.pi * d * f / C)
    return float(out) if out.ndim == 0 else out


def power_watts(tx_power_dbm, pathloss_db):
    return 10.0 ** ((tx_power_dbm - pathloss_db - 30.0) / 10.0)


@dataclass(frozen=True)
class Building:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    height: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min and self.height > 0):
            raise ConfigError(f"degenerate building {self}")

    @property
    def box(self):
        return (self.x_min, self.x_max, self.y_min, self.y_max, 0.0, self.height)

    def contains(self, point) -> bool:
        x, y, z = point
        return (self.x_min < x < self.x_max and self.y_min < y < self.y_max and 0.0 <= z < self.height)


@dataclass(frozen=True)
class UserGrid:
    origin: tuple = (0.0, 0.0)
    nx: int = 10
    ny: int = 10
    spacing: float = 0.37

    def points(self, height):
        """Grid points, x varying fastest."""
        xs = self.origin[0] + self.spacing * np.arange(self.nx)
        ys = self.origin[1] + self.spacing * np.arange(self.ny)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(height))])


@dataclass(frozen=True)
class ScenarioConfig:
    bs_position: tuple = (0.0, 0.0, 15.0)
    user_grid: UserGrid = field(default_factory=UserGrid)
    user_height: float = 2.0
    carrier_freq: float = 2.8e10
    tx_power: float = 0.0
    buildings: tuple = ()
    max_reflections: int = 4
    reflection_loss: float = 6.0
    ground_reflection: bool = True
    # {"count", "area": [x0, x1, y0, y1], "size": [lo, hi], "height": [lo, hi]}; realized from seed
    random_buildings: dict | None = None
    bandwidth: float = 1e5  # metadata only
    seed: int = 0

    def validate(self):
        g = self.user_grid
        if not g.spacing > 0:
            raise ConfigError("user grid spacing must be positive")
        if g.nx < 1 or g.ny < 1:
            raise ConfigError("user grid needs nx, ny >= 1")
        if not self.carrier_freq > 0:
            raise ConfigError("carrier frequency must be positive")
        if not 0 <= self.max_reflections <= 4:
            raise ConfigError("max_reflections must be in [0, 4]")
        if self.reflection_loss < 0:
            raise ConfigError("reflection loss must be non-negative")
        if len(self.bs_position) != 3:
            raise ConfigError("bs_position must be a 3-D point")
        for b in self.buildings:
            if b.contains(self.bs_position):
                raise ConfigError("base station lies inside a building")
        return self

    def resolved(self) -> "ScenarioConfig":
        """Config with ``random_buildings`` realized as explicit boxes."""
        if not self.random_buildings:
            return self
        extra = _random_buildings(self.random_buildings, self.bs_position, self.seed)
        return replace(self, buildings=tuple(self.buildings) + extra, random_buildings=None)

    def to_dict(self):
        d = asdict(self)
        d["buildings"] = [asdict(b) for b in self.buildings]
        d["user_grid"] = asdict(self.user_grid)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown scene keys: {sorted(unknown)}")
        try:
            if "user_grid" in d:
                d["user_grid"] = UserGrid(**{**d["user_grid"], "origin": tuple(d["user_grid"].get("origin", (0.0, 0.0)))})
            if "buildings" in d:
                d["buildings"] = tuple(Building(**b) for b in d["buildings"])
            if "bs_position" in d:
                d["bs_position"] = tuple(float(v) for v in d["bs_position"])
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad scene description: {exc}") from None
        return cfg.validate()


def load_scene(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scene {path}: {exc}") from None
    return ScenarioConfig.from_dict(d)


def _random_buildings(spec, bs, seed):
    rng = np.random.default_rng([int(seed), 0xB1D])
    x0, x1, y0, y1 = spec["area"]
    s_lo, s_hi = spec.get("size", (10.0, 30.0))
    h_lo, h_hi = spec.get("height", (10.0, 40.0))
    out = []
    attempts = 0
    while len(out) < spec["count"]:
        attempts += 1
        if attempts > 1000 * spec["count"]:
            raise ConfigError("could not place random buildings away from the base station")
        w, d = rng.uniform(s_lo, s_hi, size=2)
        cx = rng.uniform(x0, x1 - w)
        cy = rng.uniform(y0, y1 - d)
        h = rng.uniform(h_lo, h_hi)
        b = Building(float(cx), float(cx + w), float(cy), float(cy + d), float(h))
        margin = 1.0
        if (b.x_min - margin < bs[0] < b.x_max + margin) and (b.y_min - margin < bs[1] < b.y_max + margin):
            continue
        out.append(b)
    return tuple(out)


# geometry

@dataclass(frozen=True)
class _Reflector:
    axis: int  # axis of the plane normal
    coord: float
    sign: float  # +1 when the outward normal points to +axis
    lo: tuple  # inclusive face bounds per axis (infinite along the normal)
    hi: tuple
    building: int  # -1 for ground


def _reflectors(config):
    out = []
    inf = math.inf
    for bi, b in enumerate(config.buildings):
        h = b.height
        out.append(_Reflector(0, b.x_min, -1.0, (-inf, b.y_min, 0.0), (inf, b.y_max, h), bi))
        out.append(_Reflector(0, b.x_max, 1.0, (-inf, b.y_min, 0.0), (inf, b.y_max, h), bi))
        out.append(_Reflector(1, b.y_min, -1.0, (b.x_min, -inf, 0.0), (b.x_max, inf, h), bi))
        out.append(_Reflector(1, b.y_max, 1.0, (b.x_min, -inf, 0.0), (b.x_max, inf, h), bi))
    if config.ground_reflection:
        out.append(_Reflector(2, 0.0, 1.0, (-inf, -inf, -inf), (inf, inf, inf), -1))
    return out


@dataclass
class _ImageLevel:
    """Every feasible reflector sequence of one order, as arrays."""

    seqs: np.ndarray  # (S, k) reflector indices
    images: np.ndarray  # (S, k, 3) successive base-station images
    axis: np.ndarray
    coord: np.ndarray
    sign: np.ndarray
    lo: np.ndarray  # (S, k, 3)
    hi: np.ndarray

    def __len__(self):
        return self.seqs.shape[0]

    def take(self, idx):
        return _ImageLevel(*(getattr(self, f)[idx] for f in
                             ("seqs", "images", "axis", "coord", "sign", "lo", "hi")))


def _image_levels(config, max_order, reflectors):
    """Image tree of the base station, one ``_ImageLevel`` per bounce count.

    A sequence survives when every source image lies on the outward side of
    the next reflector, no reflector repeats back-to-back, and consecutive
    walls belong to different buildings (a ray leaving a convex box cannot
    hit the same box again directly).
    """
    nr = len(reflectors)
    r_axis = np.array([r.axis for r in reflectors], dtype=np.int64)
    r_coord = np.array([r.coord for r in reflectors])
    r_sign = np.array([r.sign for r in reflectors])
    r_bld = np.array([r.building for r in reflectors], dtype=np.int64)
    r_lo = np.array([r.lo for r in reflectors]).reshape(nr, 3)
    r_hi = np.array([r.hi for r in reflectors]).reshape(nr, 3)

    bs = np.array(config.bs_position, dtype=np.float64)
    seqs = np.zeros((1, 0), dtype=np.int64)
    images = bs.reshape(1, 1, 3)  # column 0 is the base station itself
    levels = []
    for order in range(1, max_order + 1):
        last = images[:, -1]
        new_seq, new_img = [], []
        for j in range(nr):
            a = r_axis[j]
            keep = (last[:, a] - r_coord[j]) * r_sign[j] > 0
            if order > 1:
                prev = seqs[:, -1]
                keep &= prev != j
                if r_bld[j] >= 0:
                    keep &= r_bld[prev] != r_bld[j]
            if not keep.any():
                continue
            idx = np.flatnonzero(keep)
            mirrored = last[idx].copy()
            mirrored[:, a] = 2.0 * r_coord[j] - mirrored[:, a]
            new_seq.append(np.column_stack([seqs[idx], np.full(idx.size, j)]))
            new_img.append(np.concatenate([images[idx], mirrored[:, None, :]], axis=1))
        if not new_seq:
            break
        # keep enumeration order: by parent sequence, then reflector index
        seqs = np.concatenate(new_seq)
        images = np.concatenate(new_img)
        order_idx = np.lexsort(tuple(seqs[:, c] for c in range(seqs.shape[1] - 1, -1, -1)))
        seqs, images = seqs[order_idx], images[order_idx]
        levels.append(_ImageLevel(
            seqs, images[:, 1:], r_axis[seqs], r_coord[seqs], r_sign[seqs], r_lo[seqs], r_hi[seqs],
        ))
    return levels


def _reflection_points(users, level, s_idx, m_idx):
    """Reflection points ``(P, k, 3)`` for (sequence, user) pairs, walking back from the user."""
    k = level.seqs.shape[1]
    rows = np.arange(s_idx.size)
    pts = np.empty((s_idx.size, k, 3))
    q = users[m_idx]
    for j in range(k - 1, -1, -1):
        a = level.axis[s_idx, j]
        c = level.coord[s_idx, j]
        img = level.images[s_idx, j]
        ia = img[rows, a]
        t = (c - ia) / (q[rows, a] - ia)
        pt = img + t[:, None] * (q - img)
        pt[rows, a] = c
        pts[:, j] = pt
        q = pt
    return pts


def _trace_level(config, users, level, boxes, max_pairs=20_000_000):
    """Valid, unoccluded paths of one bounce order.

    Returns ``(s_idx, m_idx, length, first_pt, last_pt)`` sorted by sequence
    then user.
    """
    bs = np.array(config.bs_position, dtype=np.float64)
    m = users.shape[0]
    out = []
    per_chunk = max(1, max_pairs // max(m, 1))
    for s0 in range(0, len(level), per_chunk):
        sub = level.take(slice(s0, s0 + per_chunk))
        mask = kernels.reflection_mask(users, sub.images, sub.axis, sub.coord, sub.sign, sub.lo, sub.hi, bs)
        s_idx, m_idx = np.nonzero(mask)
        if s_idx.size == 0:
            continue
        pts = _reflection_points(users, sub, s_idx, m_idx)
        alive = np.ones(s_idx.size, dtype=bool)
        if boxes.shape[0]:
            k = pts.shape[1]
            chain = [np.broadcast_to(bs, (s_idx.size, 3))] + [pts[:, j] for j in range(k)] + [users[m_idx]]
            idx = np.arange(s_idx.size)
            for seg in range(k + 1):
                if idx.size == 0:
                    break
                blocked = kernels.segments_blocked(chain[seg][idx], chain[seg + 1][idx], boxes).astype(bool)
                alive[idx[blocked]] = False
                idx = idx[~blocked]
        s_idx, m_idx, pts = s_idx[alive], m_idx[alive], pts[alive]
        length = np.linalg.norm(users[m_idx] - sub.images[s_idx, -1], axis=1)
        out.append((s_idx + s0, m_idx, length, pts[:, 0], pts[:, -1]))
    if not out:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3))
    return tuple(np.concatenate(parts) for parts in zip(*out))


def _angles(vec):
    """(phi, theta) in degrees for direction vectors; phi in (-180, 180], theta from zenith."""
    vec = np.atleast_2d(vec)
    phi = np.degrees(np.arctan2(vec[:, 1], vec[:, 0]))
    phi = np.where(phi <= -180.0, phi + 360.0, phi)
    norm = np.linalg.norm(vec, axis=1)
    theta = np.degrees(np.arccos(np.clip(vec[:, 2] / norm, -1.0, 1.0)))
    return phi, theta


def _boxes(config):
    return np.array([b.box for b in config.buildings], dtype=np.float64).reshape(-1, 6)


def _users_inside(config, users):
    inside = np.zeros(users.shape[0], dtype=bool)
    for b in config.buildings:
        inside |= (
            (users[:, 0] > b.x_min) & (users[:, 0] < b.x_max)
            & (users[:, 1] > b.y_min) & (users[:, 1] < b.y_max)
            & (users[:, 2] >= 0) & (users[:, 2] < b.height)
        )
    return inside


def _los_blocked(config, users, boxes):
    n = users.shape[0]
    if not boxes.shape[0] or n == 0:
        return np.zeros(n, dtype=bool)
    bs = np.array(config.bs_position, dtype=np.float64)
    return kernels.segments_blocked(np.tile(bs, (n, 1)), users, boxes).astype(bool)


@dataclass(frozen=True)
class PropagationPath:
    length: float
    bounces: int
    arrival_angles: tuple  # (phi, theta) at the receiver, pointing back along the arriving ray
    departure_angles: tuple  # (phi, theta) at the transmitter
    is_los: bool
    reflectors: tuple = ()


def trace_paths(config: ScenarioConfig, user) -> list[PropagationPath]:
    """Every LoS / image-method path from the base station to one user.

    Ordered LoS first, then by bounce count, then reflector enumeration
    order. An empty list means total blockage.
    """
    config = config.resolved()
    u = np.asarray(user, dtype=np.float64).reshape(1, 3)
    bs = np.array(config.bs_position, dtype=np.float64)
    boxes = _boxes(config)
    paths = []
    if not _los_blocked(config, u, boxes)[0]:
        d = float(np.linalg.norm(u - bs, axis=1)[0])
        phi_a, th_a = _angles(bs - u)
        phi_d, th_d = _angles(u - bs)
        paths.append(PropagationPath(d, 0, (float(phi_a[0]), float(th_a[0])),
                                     (float(phi_d[0]), float(th_d[0])), True))
    refl = _reflectors(config)
    for order, level in enumerate(_image_levels(config, config.max_reflections, refl), start=1):
        s_idx, _, length, first, last = _trace_level(config, u, level, boxes)
        phi_a, th_a = _angles(last - u) if s_idx.size else ((), ())
        phi_d, th_d = _angles(first - bs) if s_idx.size else ((), ())
        for i, s in enumerate(s_idx):
            paths.append(PropagationPath(
                float(length[i]), order, (float(phi_a[i]), float(th_a[i])),
                (float(phi_d[i]), float(th_d[i])), False, tuple(int(v) for v in level.seqs[s]),
            ))
    return paths


def path_loss(config, path: PropagationPath) -> float:
    return free_space_pathloss(path.length, config.carrier_freq) + path.bounces * config.reflection_loss


def _record_rows(config, user, distance, length, bounces, doa, dod, los):
    loss = free_space_pathloss(length, config.carrier_freq) + bounces * config.reflection_loss
    phase = np.mod(-360.0 * config.carrier_freq * length / C, 360.0)
    return np.column_stack([
        user[:, 0],
        user[:, 1],
        distance,
        loss,
        doa[0],
        doa[1],
        dod[0],
        dod[1],
        phase,
        power_watts(config.tx_power, loss),
        length / C,
        los.astype(np.float64),
    ])


def path_to_record(config: ScenarioConfig, user, paths) -> Record | None:
    """Reduce a path list to one record using the lowest-loss path (None if empty)."""
    if not paths:
        return None
    losses = [path_loss(config, p) for p in paths]
    best = paths[int(np.argmin(losses))]
    u = np.asarray(user, dtype=np.float64).reshape(1, 3)
    bs = np.array(config.bs_position, dtype=np.float64)
    distance = np.linalg.norm(u - bs, axis=1)
    length = distance if best.is_los else np.array([best.length])
    row = _record_rows(
        config, u, distance, length, np.array([best.bounces]),
        (np.array([best.arrival_angles[0]]), np.array([best.arrival_angles[1]])),
        (np.array([best.departure_angles[0]]), np.array([best.departure_angles[1]])),
        np.array([best.is_los]),
    )
    return Record.from_array(row[0])


def generate_scenario(config: ScenarioConfig) -> RecordSet:
    """One record per reachable grid user, strongest path only.

    Users inside buildings and totally blocked users are excluded; their
    counts are reported in ``meta``. Output depends only on the config.
    """
    config = config.resolved().validate()
    users_all = config.user_grid.points(config.user_height)
    inside = _users_inside(config, users_all)
    users = users_all[~inside]
    n = users.shape[0]
    if n == 0:
        raise EmptyDatasetError("every grid user lies inside a building")
    bs = np.array(config.bs_position, dtype=np.float64)
    boxes = _boxes(config)
    freq = config.carrier_freq

    distance = np.linalg.norm(users - bs, axis=1)
    best_loss = np.full(n, np.inf)
    best_len = np.full(n, np.nan)
    best_bounces = np.zeros(n, dtype=np.int64)
    first_pt = np.tile(bs, (n, 1))
    last_pt = users.copy()

    los = ~_los_blocked(config, users, boxes)
    if los.any():
        best_loss[los] = free_space_pathloss(distance[los], freq)
    best_len[los] = distance[los]
    first_pt[los] = users[los]
    last_pt[los] = bs

    refl = _reflectors(config)
    floor_loss = free_space_pathloss(distance, freq)
    for order, level in enumerate(_image_levels(config, config.max_reflections, refl), start=1):
        # a k-bounce path is never shorter than the straight line
        cand = np.flatnonzero(best_loss > floor_loss + order * config.reflection_loss)
        if cand.size == 0:
            break
        s_idx, m_idx, length, first, last = _trace_level(config, users[cand], level, boxes)
        if s_idx.size == 0:
            continue
        # per user: shortest path, ties to the earliest sequence
        pick = np.lexsort((s_idx, length, m_idx))
        m_sorted = m_idx[pick]
        head = pick[np.r_[True, m_sorted[1:] != m_sorted[:-1]]]
        tgt = cand[m_idx[head]]
        loss = free_space_pathloss(length[head], freq) + order * config.reflection_loss
        better = loss < best_loss[tgt]
        tgt, head = tgt[better], head[better]
        best_loss[tgt] = loss[better]
        best_len[tgt] = length[head]
        best_bounces[tgt] = order
        first_pt[tgt] = first[head]
        last_pt[tgt] = last[head]

    reachable = np.isfinite(best_loss)
    meta = {
        "grid_users": int(users_all.shape[0]),
        "inside_buildings": int(inside.sum()),
        "blocked": int((~reachable).sum()),
        "bandwidth": config.bandwidth,
    }
    if not reachable.any():
        raise EmptyDatasetError("no grid user has a propagation path to the base station")
    u = users[reachable]
    doa = _angles(last_pt[reachable] - u)
    dod = _angles(first_pt[reachable] - bs)
    rows = _record_rows(
        config, u, distance[reachable], best_len[reachable], best_bounces[reachable],
        doa, dod, los[reachable],
    )
    return RecordSet(rows, provenance="generated", meta=meta)


def default_urban_scene(nx=240, ny=240, spacing=1.75, n_buildings=60, seed=0, max_reflections=2):
    """A seeded street scene: base station at the grid centre, random blocks around it."""
    side_x = nx * spacing
    side_y = ny * spacing
    origin = (-side_x / 2.0, -side_y / 2.0)
    return ScenarioConfig(
        bs_position=(0.0, 0.0, 15.0),
        user_grid=UserGrid(origin=origin, nx=nx, ny=ny, spacing=spacing),
        max_reflections=max_reflections,
        random_buildings={
            "count": n_buildings,
            "area": [origin[0], origin[0] + side_x, origin[1], origin[1] + side_y],
            "size": [0.03 * side_x, 0.08 * side_x],
            "height": [8.0, 40.0],
        },
        seed=seed,
    )
