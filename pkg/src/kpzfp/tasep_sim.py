"""Continuous-time TASEP simulation, height functions and Monte Carlo estimators.

Particles are labelled from the right, X(k+1) < X(k). A ParticleConfig
stores the finite labels first..last; labels below `first` sit at +inf and
labels above `last` at -inf. When the finite list is a truncation of an
infinite system (step data, say) `truncated` is set: the motion of labels
<= last is still exact, because a particle only ever looks at the particle
in front of it, but heights to the left of X(last) are not determined.

Two engines are used:

* particle clocks (uniformized): rings arrive at total rate N and hit a
  uniformly chosen particle, which jumps if the site in front is free;
* site clocks on a window of height values, used for the basic coupling of
  several initial conditions. A ring at height site z turns a local max of
  h at z into a local min, h(z) -> h(z) - 2.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InsufficientDataError, InvalidConfigError, PrecisionError

NEG_INF = -np.inf
POS_INF = np.inf
CHUNK = 20000


@dataclass(frozen=True)
class ParticleConfig:
    positions: tuple
    first: int = 1
    truncated: bool = False

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.int64)
        if np.any(np.diff(p) >= 0):
            raise InvalidConfigError("positions must be strictly decreasing in label")

    @classmethod
    def of(cls, positions, first=1, truncated=False):
        return cls(tuple(int(v) for v in positions), int(first), bool(truncated))

    @property
    def array(self):
        return np.asarray(self.positions, dtype=np.int64)

    @property
    def n(self):
        return len(self.positions)

    @property
    def last(self):
        return self.first + self.n - 1

    def X(self, k):
        k = int(k)
        if k < self.first:
            return POS_INF
        if k > self.last:
            if self.truncated:
                raise InsufficientDataError(f"label {k} lies beyond the truncation")
            return NEG_INF
        return self.positions[k - self.first]

    def inverse(self, u):
        """X^{-1}(u) = min{k : X(k) <= u}."""
        p = self.array
        cnt = int(np.sum(p > u))
        if cnt == self.n and self.truncated:
            raise InsufficientDataError(f"site {u} lies left of the truncation")
        return self.first + cnt

    def shifted_labels(self, l):
        """theta_l: relabel k -> k - l."""
        return ParticleConfig(self.positions, self.first - int(l), self.truncated)

    def occupation(self, lo, hi):
        eta = np.zeros(hi - lo + 1, dtype=np.int8)
        p = self.array
        p = p[(p >= lo) & (p <= hi)]
        eta[p - lo] = 1
        return eta


# ---------------------------------------------------------------------------
# presets


def step(n):
    """X(i) = -i, truncated to the first n labels."""
    return ParticleConfig.of(-np.arange(1, n + 1), 1, truncated=True)


def periodic(N):
    """the finite periodic data X(i) = 2(N - i), i = 1..2N."""
    return ParticleConfig.of(2 * (N - np.arange(1, 2 * N + 1)), 1)


def half_flat(n):
    """X(i) = -2i + 1: density 1/2 to the left of the origin, empty to the right."""
    return ParticleConfig.of(-2 * np.arange(1, n + 1) + 1, 1, truncated=True)


def flat_density(rho, n, first=1):
    """deterministic density-rho packing, X(i) = -1 - floor((i - 1)/rho)."""
    if not 0 < rho <= 1:
        raise DomainError("density must be in (0, 1]")
    i = np.arange(first, first + n)
    return ParticleConfig.of(-1 - np.floor((i - 1) / rho).astype(np.int64), first, truncated=True)


def flat(n, first=1):
    """flat data X(i) = -2i + 1 for labels first..first+n-1 (first may be <= 0)."""
    i = np.arange(first, first + n)
    return ParticleConfig.of(-2 * i + 1, first, truncated=True)


def narrow_wedge(eps, n, variant="packed"):
    """discretizations of the narrow wedge at the origin.

    'packed' is step data. 'blocks' puts a block of m ~ eps^{-1/2} particles
    just left of the origin, leaves a gap of m sites and packs the rest; its
    rescaled height also converges to the narrow wedge.
    """
    if variant == "packed":
        return step(n)
    if variant == "blocks":
        m = max(1, int(round(eps ** -0.5)))
        first = -np.arange(1, m + 1)
        rest = -(2 * m) - np.arange(1, max(n - m, 0) + 1)
        return ParticleConfig.of(np.concatenate([first, rest])[:n], 1, truncated=True)
    raise ValueError(variant)


def preset(name, **kw):
    table = {"step": step, "periodic": periodic, "half-flat": half_flat,
             "flat-density": flat_density, "flat": flat,
             "narrow-wedge-discretization": narrow_wedge}
    if name not in table:
        raise DomainError(f"unknown preset {name}")
    return table[name](**kw)


# ---------------------------------------------------------------------------
# heights


@dataclass(frozen=True)
class HeightPath:
    start: int
    values: np.ndarray

    @property
    def sites(self):
        return np.arange(self.start, self.start + len(self.values))

    def __call__(self, z):
        return int(self.values[int(z) - self.start])

    @property
    def increments(self):
        return np.diff(self.values)

    def interpolate(self, x):
        return np.interp(x, self.sites, self.values)


def reference_label(config0):
    """r = X_0^{-1}(-1)."""
    return config0.inverse(-1)


def height_from_config(config, ref_inverse, lo, hi):
    """h(z) = -2 (X^{-1}(z - 1) - r) - z for z in [lo, hi]."""
    z = np.arange(lo, hi + 1)
    p = config.array
    if config.truncated and (config.n == 0 or p[-1] > lo - 1):
        raise InsufficientDataError("height range reaches past the truncated particles")
    cnt = np.sum(p[:, None] > (z[None, :] - 1), axis=0)
    inv = config.first + cnt
    return HeightPath(int(lo), -2 * (inv - int(ref_inverse)) - z)


def heights_batch(pos, first, ref, zs):
    """heights at sites zs for a batch of configurations pos[s, label]."""
    cnt = np.zeros((pos.shape[0], len(zs)), dtype=np.int64)
    for j, z in enumerate(zs):
        cnt[:, j] = np.sum(pos >= z, axis=1)
    return -2 * (first + cnt - ref) - np.asarray(zs)[None, :]


# ---------------------------------------------------------------------------
# single-path engine with an event log


@dataclass
class EventLog:
    times: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    sites: list = field(default_factory=list)

    def append(self, t, label, site):
        self.times.append(t)
        self.labels.append(label)
        self.sites.append(site)

    def __len__(self):
        return len(self.times)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "label", "from_site"])
            for row in zip(self.times, self.labels, self.sites):
                w.writerow([repr(float(row[0])), row[1], row[2]])

    def replay(self, config0):
        """re-run the log from config0 checking exclusion at every event."""
        pos = {k: config0.X(k) for k in range(config0.first, config0.last + 1)}
        prev = -1.0
        for t, k, s in zip(self.times, self.labels, self.sites):
            if not t > prev:
                raise InvalidConfigError("event times not increasing")
            if pos[k] != s:
                raise InvalidConfigError("log does not match configuration")
            if k - 1 in pos and pos[k - 1] == s + 1:
                raise InvalidConfigError("jump onto an occupied site")
            pos[k] = s + 1
            prev = t
        return ParticleConfig.of([pos[k] for k in sorted(pos)], config0.first, config0.truncated)


def evolve(config, t, seed):
    """Exact dynamics of one path; returns (final config, EventLog)."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    rng = np.random.default_rng(seed)
    pos = config.array.copy()
    log = EventLog()
    N = len(pos)
    if N == 0 or t == 0:
        return config, log
    now = 0.0
    while True:
        now += rng.exponential(1.0 / N)
        if now > t:
            break
        i = int(rng.integers(N))
        if i == 0 or pos[i] + 1 < pos[i - 1]:
            log.append(now, config.first + i, int(pos[i]))
            pos[i] += 1
    return ParticleConfig.of(pos, config.first, config.truncated), log


# ---------------------------------------------------------------------------
# batched engine


def simulate_batch(positions, t, replicas, rng):
    """final positions (replicas, N) of TASEP started from `positions`."""
    pos0 = np.asarray(positions, dtype=np.int64)
    N = len(pos0)
    pos = np.tile(pos0, (replicas, 1))
    if N == 0 or t == 0:
        return pos
    rings = rng.poisson(N * t, size=replicas)
    order = np.argsort(-rings, kind="stable")
    pos = pos[order]
    rings = rings[order]
    rows = np.arange(replicas)
    for r in range(int(rings.max(initial=0))):
        # rows are sorted by ring count, so the live ones form a prefix
        live = int(np.sum(rings > r))
        if live == 0:
            break
        idx = rng.integers(N, size=live)
        rr = rows[:live]
        cur = pos[rr, idx]
        ahead = np.where(idx > 0, pos[rr, np.maximum(idx - 1, 0)], np.iinfo(np.int64).max)
        ok = cur + 1 < ahead
        pos[rr[ok], idx[ok]] += 1
    out = np.empty_like(pos)
    out[order] = pos
    return out


def _chunks(samples):
    sizes = [CHUNK] * (samples // CHUNK)
    if samples % CHUNK:
        sizes.append(samples % CHUNK)
    return sizes


def sample_positions(config, t, samples, seed, labels=None, threads=1):
    """Monte Carlo final positions of the requested labels, (samples, len(labels)).

    Only labels up to the largest requested one are simulated. Chunks use
    child seeds of `seed`, so results do not depend on the thread count.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    labels = list(range(config.first, config.last + 1)) if labels is None else list(labels)
    kmax = max(labels)
    if kmax > config.last or min(labels) < config.first:
        raise DomainError("label beyond available particles")
    pos0 = config.array[: kmax - config.first + 1]
    cols = [k - config.first for k in labels]
    sizes = _chunks(samples)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(i):
        rng = np.random.default_rng(seeds[i])
        return simulate_batch(pos0, t, sizes[i], rng)[:, cols]

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, len(cols)), np.int64)


def empirical_multipoint(initial, t, events, samples, seed, threads=1):
    """Frequency estimate of P(X_t(n_j) >= a_j for all j) and its binomial std-error."""
    if samples < 1:
        raise DomainError("need at least one sample")
    ev = [(int(n), a) for n, a in events if a != -np.inf]
    if not ev:
        return 1.0, 0.0
    for n, _ in ev:
        if n < initial.first or n > initial.last:
            raise DomainError(f"label {n} beyond available particles")
    X = sample_positions(initial, t, samples, seed, [n for n, _ in ev], threads)
    hit = np.all(X >= np.array([a for _, a in ev])[None, :], axis=1)
    p = float(hit.mean())
    return p, float(np.sqrt(max(p * (1 - p), 0.0) / samples))


# ---------------------------------------------------------------------------
# site-clock engine on height windows


def _height_rings(H, t, rng):
    """run site clocks on interior sites of the heights H[s, c, z], in place.

    All configurations c of a sample s share the same clock rings.
    """
    S, C, W = H.shape
    if W < 3 or t == 0:
        return H
    rings = rng.poisson((W - 2) * t, size=S)
    rows = np.arange(S)
    for r in range(int(rings.max(initial=0))):
        live = rows[rings > r]
        if len(live) == 0:
            break
        z = rng.integers(1, W - 1, size=len(live))
        for c in range(C):
            h = H[live, c, z]
            peak = (H[live, c, z - 1] == h - 1) & (H[live, c, z + 1] == h - 1)
            H[live[peak], c, z[peak]] -= 2
    return H


def config_heights(config, ref, lo, hi):
    return height_from_config(config, ref, lo, hi).values


def coupled_evolve(configs, t, seed, window=None, ref=None):
    """Basic coupling: one clock per lattice site shared by all configurations.

    The configurations are evolved as height functions on a common window
    that must be wide enough for nothing to reach its edges; this is
    checked and a PrecisionError raised otherwise.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    if window is None:
        top = max(int(c.array.max()) for c in configs if c.n)
        bot = min(int(c.array.min()) for c in configs if c.n)
        pad = int(np.ceil(t + 8 * np.sqrt(t) + 10))
        window = (bot, top + pad)
    lo, hi = window
    ref = 1 if ref is None else ref
    H = np.stack([_raw_heights(c, lo, hi + 1) for c in configs])[None]
    H0 = H.copy()
    _height_rings(H, t, np.random.default_rng(seed))
    if np.any(H[0, :, -3:] != H0[0, :, -3:]):
        raise PrecisionError("a particle reached the right edge of the window")
    out = []
    for c, h in zip(configs, H[0]):
        eta = (np.diff(h) + 1) // 2
        sites = np.flatnonzero(eta)[::-1] + lo
        out.append(ParticleConfig.of(sites, c.first, c.truncated))
    return out


def _raw_heights(config, lo, hi):
    """heights from occupations anchored at 0 at `lo`; only increments matter."""
    eta = config.occupation(lo, hi - 1).astype(np.int64)
    return np.concatenate([[0], np.cumsum(2 * eta - 1)])


def coupled_height_run(H0, t, samples, seed):
    """evolve several height profiles H0[c, z] under shared site clocks.

    Returns the final heights, shape (samples, C, W). Edge values are frozen.
    """
    H0 = np.asarray(H0, dtype=np.int64)
    d = np.abs(np.diff(H0, axis=1))
    if np.any(d != 1):
        raise InvalidConfigError("heights must have +-1 increments")
    H = np.tile(H0[None], (samples, 1, 1))
    out = []
    sizes = _chunks(samples)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    s0 = 0
    for sz, ss in zip(sizes, seeds):
        out.append(_height_rings(H[s0:s0 + sz], t, np.random.default_rng(ss)))
        s0 += sz
    return np.concatenate(out, axis=0)


def max_preservation_check(f1, f2, t, samples, seed):
    """run f1, f2 and f1 v f2 together; count samples where h(f1 v f2) != h(f1) v h(f2)."""
    f1 = np.asarray(f1, dtype=np.int64)
    f2 = np.asarray(f2, dtype=np.int64)
    H = coupled_height_run(np.stack([f1, f2, np.maximum(f1, f2)]), t, samples, seed)
    bad = np.any(H[:, 2] != np.maximum(H[:, 0], H[:, 1]), axis=1)
    return int(bad.sum())


def attractivity_check(f1, f2, t, samples, seed):
    """with f1 <= f2, count samples where the coupled heights lose their order."""
    f1 = np.asarray(f1, dtype=np.int64)
    f2 = np.asarray(f2, dtype=np.int64)
    if np.any(f1 > f2):
        raise DomainError("need f1 <= f2")
    H = coupled_height_run(np.stack([f1, f2]), t, samples, seed)
    return int(np.any(H[:, 0] > H[:, 1], axis=1).sum())


def skew_time_reversal_check(f, g, t, samples, seed):
    """Monte Carlo P_f(h_t <= g) and P_{-g}(h_t <= -f) on a window.

    f and g are height profiles on a common window with frozen edges; the
    window must be wide enough that the edges do not matter. Returns
    ((p1, se1), (p2, se2)).
    """
    f = np.asarray(f, dtype=np.int64)
    g = np.asarray(g, dtype=np.int64)
    r1 = coupled_height_run(f[None], t, samples, seed)[:, 0]
    r2 = coupled_height_run(-g[None], t, samples, seed + 1)[:, 0]
    p1 = float(np.all(r1 <= g, axis=1).mean())
    p2 = float(np.all(r2 <= -f, axis=1).mean())
    se = lambda p: float(np.sqrt(max(p * (1 - p), 1e-300) / samples))
    return (p1, se(p1)), (p2, se(p2))


# ---------------------------------------------------------------------------
# estimators


def _occupation_rings(E, t, rng):
    """site clocks on occupation arrays E[s, z]; particles leave at the right edge."""
    S, W = E.shape
    rings = rng.poisson(W * t, size=S)
    rows = np.arange(S)
    for r in range(int(rings.max(initial=0))):
        live = rows[rings > r]
        if len(live) == 0:
            break
        z = rng.integers(0, W, size=len(live))
        here = E[live, z] == 1
        nxt = np.where(z + 1 < W, E[live, np.minimum(z + 1, W - 1)], 0)
        move = here & (nxt == 0)
        E[live[move], z[move]] = 0
        inside = move & (z + 1 < W)
        E[live[inside], z[inside] + 1] = 1
    return E


def bernoulli_invariance_check(density, window, t, samples, seed, pad=None):
    """1- and nearest-neighbour 2-point occupation statistics at times 0 and t.

    The product Bernoulli(density) measure is sampled on the window padded by
    8t + 10 sites on each side.
    """
    lo, hi = window
    pad = int(np.ceil(8 * t + 10)) if pad is None else pad
    W = hi - lo + 1 + 2 * pad
    rng = np.random.default_rng(seed)
    E0 = (rng.random((samples, W)) < density).astype(np.int8)
    E = _occupation_rings(E0.copy(), t, rng)
    sl = slice(pad, pad + hi - lo + 1)

    def stats(A):
        a = A[:, sl].astype(float)
        one = a.mean(axis=0)
        one_se = a.std(axis=0, ddof=1) / np.sqrt(samples) if samples > 1 else np.zeros_like(one)
        pair = a[:, :-1] * a[:, 1:]
        two = pair.mean(axis=0)
        two_se = pair.std(axis=0, ddof=1) / np.sqrt(samples) if samples > 1 else np.zeros_like(two)
        return {"one": one, "one_se": one_se, "two": two, "two_se": two_se}

    return {"sites": np.arange(lo, hi + 1), "t0": stats(E0), "t": stats(E)}


def increment_statistics(initial, t, y, offsets, samples, seed, threads=1):
    """E[(h_t(y + d) - h_t(y))^2] for each lattice offset d, with std-errors."""
    offsets = [int(d) for d in offsets]
    zs = sorted({int(y)} | {int(y) + d for d in offsets})
    pos = sample_positions(initial, t, samples, seed, threads=threads)
    if initial.truncated and np.any(pos[:, -1] > min(zs) - 1):
        raise InsufficientDataError("too few particles simulated for the height window")
    ref = reference_label(initial)
    H = heights_batch(pos, initial.first, ref, zs)
    col = {z: i for i, z in enumerate(zs)}
    rows = []
    for d in offsets:
        inc = (H[:, col[y + d]] - H[:, col[y]]).astype(float)
        sq = inc ** 2
        rows.append((d, float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0))
    return rows
