"""Community-based (TVCM-style) mobility with disk-shaped small-cell coverage.

Every user has a home community (an axis-aligned rectangle). Time
alternates between home epochs, in which the user does random-waypoint
movement inside the community, and short excursions with waypoints
anywhere outside it, closed by a return leg. The next home epoch's mean
length is set from the excursion just finished so that the long-run
fraction of time physically inside the home community equals
``home_fraction``.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .trace import ContactTrace

__all__ = [
    'MobilityConfig',
    'UserPath',
    'default_communities',
    'place_cells',
    'tvcm_paths',
    'generate_tvcm_trace',
    'home_time_fraction',
]


def default_communities(area=1000.0, count=3, size=300.0):
    """``count`` non-overlapping squares of side ``size`` spread over the area."""
    anchors = [(0.1, 0.1), (0.6, 0.15), (0.3, 0.6), (0.65, 0.6), (0.05, 0.65), (0.4, 0.05)]
    if count > len(anchors):
        raise ConfigurationError("at most 6 default communities")
    out = []
    for fx, fy in anchors[:count]:
        x0, y0 = fx * area, fy * area
        out.append((x0, y0, min(x0 + size, area), min(y0 + size, area)))
    return tuple(out)


@dataclass(frozen=True)
class MobilityConfig:
    """Parameters of the community mobility generator.

    Distances are meters, times seconds. ``communities`` holds rectangles
    ``(x0, y0, x1, y1)``; ``None`` uses :func:`default_communities`.
    ``cell_centers`` and ``start_positions`` override the seeded layout.
    """

    area: float = 1000.0
    communities: tuple = None
    n_communities: int = 3
    home_fraction: float = 0.6
    cells: int = 25
    cell_range: float = 100.0
    users: int = 60
    speed: tuple = (1.0, 2.0)
    pause: tuple = (0.0, 60.0)
    excursion_mean: float = 600.0
    horizon: float = 86400.0
    seed: int = 0
    cell_centers: tuple = None
    start_positions: tuple = None
    placement_retries: int = 100

    def __post_init__(self):
        if not 0.0 < self.home_fraction < 1.0:
            raise ConfigurationError("home_fraction must lie in (0, 1)")
        if self.cells < 0 or self.users < 0 or self.horizon < 0 or self.cell_range < 0:
            raise ConfigurationError("counts, horizon and range must be >= 0")
        if self.speed[0] < 0 or self.speed[1] < self.speed[0]:
            raise ConfigurationError("speed must be a (low, high) range with 0 <= low <= high")
        if self.communities is None:
            object.__setattr__(self, 'communities',
                               default_communities(self.area, self.n_communities))
        for x0, y0, x1, y1 in self.communities:
            if not (0 <= x0 < x1 <= self.area and 0 <= y0 < y1 <= self.area):
                raise ConfigurationError("community rectangles must lie inside the area")


@dataclass(frozen=True, eq=False)
class UserPath:
    """Piecewise-linear trajectory: segment k goes ``p0[k] -> p1[k]`` over ``[t0[k], t1[k]]``."""

    t0: np.ndarray
    t1: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    home: int

    def position(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.t1, t, side='left'), 0, self.t0.size - 1)
        span = self.t1[k] - self.t0[k]
        frac = np.where(span > 0, (t - self.t0[k]) / np.where(span > 0, span, 1.0), 0.0)
        frac = np.clip(frac, 0.0, 1.0)[:, None]
        return self.p0[k] + frac * (self.p1[k] - self.p0[k])


def place_cells(config, rng):
    """Cell centers on a jittered lattice, pairwise more than ``2 * range`` apart."""
    n, r, side = config.cells, config.cell_range, config.area
    if config.cell_centers is not None:
        centers = np.asarray(config.cell_centers, dtype=float).reshape(-1, 2)
        if centers.shape[0] != n:
            raise ConfigurationError("cell_centers must list one center per cell")
        _check_separation(centers, r)
        return centers
    if n == 0:
        return np.zeros((0, 2))
    g = int(np.ceil(np.sqrt(n)))
    spacing = side / (g - 1) if g > 1 else side
    if g > 1 and spacing <= 2 * r:
        raise ConfigurationError(
            f"{n} cells of range {r} m cannot be placed without overlap in {side} m")
    jitter = max(0.0, 0.5 * (spacing - 2 * r)) * 0.99 if g > 1 else 0.5 * side
    axis = np.linspace(0.0, side, g) if g > 1 else np.array([0.5 * side])
    sites = np.array([(x, y) for x in axis for y in axis])
    for _ in range(config.placement_retries):
        pick = sites[np.sort(rng.choice(len(sites), size=n, replace=False))]
        centers = np.clip(pick + rng.uniform(-jitter, jitter, size=pick.shape), 0.0, side)
        try:
            _check_separation(centers, r)
            return centers
        except ConfigurationError:
            continue
    raise ConfigurationError(f"cell placement failed after {config.placement_retries} retries")


def _check_separation(centers, r):
    if len(centers) < 2 or r == 0:
        return
    d = np.sqrt(((centers[:, None, :] - centers[None, :, :]) ** 2).sum(-1))
    d[np.diag_indices_from(d)] = np.inf
    if d.min() <= 2 * r:
        raise ConfigurationError("cells overlap: some centers are within 2 * range")


def _uniform_in(rect, rng):
    x0, y0, x1, y1 = rect
    return np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])


def _outside(rect, side, rng):
    for _ in range(1000):
        p = rng.uniform(0.0, side, size=2)
        if not (rect[0] <= p[0] <= rect[2] and rect[1] <= p[1] <= rect[3]):
            return p
    return p


def _inside_length(p0, p1, rect):
    """Fraction of segment ``p0 -> p1`` inside ``rect`` (Liang-Barsky clip)."""
    d = p1 - p0
    lo, hi = 0.0, 1.0
    for k, (a, b) in enumerate(((rect[0], rect[2]), (rect[1], rect[3]))):
        if d[k] == 0:
            if not a <= p0[k] <= b:
                return 0.0
            continue
        s1, s2 = (a - p0[k]) / d[k], (b - p0[k]) / d[k]
        lo, hi = max(lo, min(s1, s2)), min(hi, max(s1, s2))
    return max(0.0, hi - lo)


def _leg(rng, config, pos, dest, t, t_stop, segs):
    """Move in a straight line towards ``dest``, cut at ``t_stop``."""
    dist = float(np.hypot(*(dest - pos)))
    dur = dist / max(rng.uniform(*config.speed), 1e-9) if dist > 0 else 0.0
    if t + dur > t_stop:
        dest = pos + (t_stop - t) / dur * (dest - pos)
        dur = t_stop - t
    segs.append((t, t + dur, pos, dest))
    return dest, t + dur


def _walk(rng, config, pos, t, t_stop, pick, segs):
    """Waypoint legs with pauses from ``pos`` until ``t_stop``; returns (pos, t)."""
    while t < t_stop:
        pos, t = _leg(rng, config, pos, pick(), t, t_stop, segs)
        if t >= t_stop:
            break
        rest = min(rng.uniform(*config.pause), t_stop - t)
        segs.append((t, t + rest, pos, pos))
        t += rest
    return pos, t


def _time_inside(segs, rect):
    total = inside = 0.0
    for t0, t1, a, b in segs:
        dur = t1 - t0
        total += dur
        if dur <= 0:
            continue
        if np.array_equal(a, b):
            inside += dur * _point_in(a, rect)
        else:
            inside += dur * _inside_length(a, b, rect)
    return total, inside


def _user_path(config, home, rng, start=None):
    rect = config.communities[home]
    H = config.horizon
    pos = _uniform_in(rect, rng) if start is None else np.asarray(start, dtype=float)
    segs = []
    if config.speed[1] == 0:
        segs.append((0.0, H, pos, pos))
    else:
        f = config.home_fraction
        home_mean = config.excursion_mean * f / (1 - f)
        t = 0.0
        while t < H:
            stay = rng.exponential(home_mean)
            pos, t = _walk(rng, config, pos, t, min(H, t + stay),
                           lambda: _uniform_in(rect, rng), segs)
            if t >= H:
                break
            k0 = len(segs)
            t_exc = min(H, t + rng.exponential(config.excursion_mean))
            pos, t = _walk(rng, config, pos, t, t_exc,
                           lambda: _outside(rect, config.area, rng), segs)
            if t < H:
                pos, t = _leg(rng, config, pos, _uniform_in(rect, rng), t, H, segs)
            # next home epoch is sized so the in-home time fraction stays at f
            total, inside = _time_inside(segs[k0:], rect)
            home_mean = max((f * total - inside) / (1 - f), 1e-9)
    t0 = np.array([s[0] for s in segs])
    t1 = np.array([s[1] for s in segs])
    p0 = np.array([s[2] for s in segs]).reshape(-1, 2)
    p1 = np.array([s[3] for s in segs]).reshape(-1, 2)
    keep = t1 > t0
    if not keep.any():
        keep[:1] = True
    return UserPath(t0[keep], t1[keep], p0[keep], p1[keep], home)


def _point_in(p, rect):
    return rect[0] <= p[0] <= rect[2] and rect[1] <= p[1] <= rect[3]


def tvcm_paths(config):
    """Trajectories of all users; deterministic given ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    centers = place_cells(config, rng)
    paths = []
    for u in range(config.users):
        start = None if config.start_positions is None else config.start_positions[u]
        paths.append(_user_path(config, u % len(config.communities), rng, start))
    return centers, paths


def _disk_intervals(path, centers, r):
    """Per leg and cell, the time interval spent within distance ``r``."""
    d = path.p1 - path.p0
    f = path.p0[:, None, :] - centers[None, :, :]
    A = (d ** 2).sum(-1)[:, None]
    B = 2 * (f * d[:, None, :]).sum(-1)
    C = (f ** 2).sum(-1) - r * r
    moving = A > 0
    with np.errstate(invalid='ignore', divide='ignore'):
        disc = B * B - 4 * A * C
        sq = np.sqrt(np.where(disc > 0, disc, 0.0))
        s1 = np.where(moving, (-B - sq) / (2 * np.where(moving, A, 1.0)), 0.0)
        s2 = np.where(moving, (-B + sq) / (2 * np.where(moving, A, 1.0)), 1.0)
    hit = np.where(moving, disc > 0, C <= 0)
    s1, s2 = np.clip(s1, 0.0, 1.0), np.clip(s2, 0.0, 1.0)
    hit &= s2 > s1
    span = (path.t1 - path.t0)[:, None]
    leg, cell = np.nonzero(hit)
    start = path.t0[leg] + s1[leg, cell] * span[leg, 0]
    end = path.t0[leg] + s2[leg, cell] * span[leg, 0]
    return cell, start, end


def generate_tvcm_trace(config, return_paths=False):
    """Contact trace of users moving under the community model.

    A contact starts when a user enters a cell's coverage disk and ends
    when it leaves (or at the horizon).

    Returns
    -------
    trace : ContactTrace
    (centers, paths) : only when ``return_paths`` is true
    """
    centers, paths = tvcm_paths(config)
    us, cs, ss, es = [], [], [], []
    if config.cell_range > 0 and config.cells > 0:
        for u, path in enumerate(paths):
            cell, start, end = _disk_intervals(path, centers, config.cell_range)
            us.append(np.full(cell.size, u))
            cs.append(cell)
            ss.append(start)
            es.append(end)
    cat = (lambda xs: np.concatenate(xs) if xs else np.zeros(0))
    trace = ContactTrace.from_contacts(cat(us), cat(cs), cat(ss), cat(es), config.horizon,
                                       config.users, config.cells)
    if return_paths:
        return trace, (centers, paths)
    return trace


def home_time_fraction(paths, config, step=1.0):
    """Measured fraction of time users are inside their home community."""
    inside = total = 0
    for path in paths:
        t = np.arange(0.0, config.horizon, step)
        pos = path.position(t)
        x0, y0, x1, y1 = config.communities[path.home]
        inside += np.count_nonzero((pos[:, 0] >= x0) & (pos[:, 0] <= x1)
                                   & (pos[:, 1] >= y0) & (pos[:, 1] <= y1))
        total += t.size
    return inside / total if total else float('nan')
