"""Synthetic scenario generators with known ground truth.

Used by the test-suite, the benchmark and the bundled CLI fixtures. Every
generator takes an explicit seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sits import FixedStepSeries


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class SeasonTruth:
    sos: float
    eos: float


def double_logistic_season(
    days,
    sos: float,
    eos: float,
    base: float = 0.15,
    amplitude: float = 0.6,
    rise: float = 8.0,
    fall: float = 8.0,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """NDVI, NDWI and PSRI series whose crossings fall on ``sos`` and ``eos``.

    NDVI is a double logistic with inflections at ``sos`` and ``eos``. NDWI
    mirrors the green-up logistic so it drops through NDVI at ``sos``; PSRI
    follows the senescence logistic and rises through NDVI at ``eos``.
    """
    t = np.asarray(days, dtype=np.float64)
    up = _logistic((t - sos) / rise)
    down = _logistic((t - eos) / fall)
    ndvi = base + amplitude * (up - down)
    ndwi = base + amplitude * (1.0 - up) - amplitude * down
    psri = base + amplitude * down - amplitude * (1.0 - up)
    out = [ndvi, ndwi, psri]
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        out = [s + rng.normal(0.0, noise, s.size) for s in out]
    return tuple(FixedStepSeries(t, s) for s in out), SeasonTruth(float(sos), float(eos))


def random_seasons(n: int, seed: int, step: int = 10, noise: float = 0.03):
    """``n`` noisy double-logistic seasons with random timing on a ``step``-day grid."""
    rng = np.random.default_rng(seed)
    days = np.arange(60, 341, step, dtype=np.float64)
    out = []
    for _ in range(n):
        sos = rng.uniform(120, 160)
        eos = sos + rng.uniform(90, 130)
        out.append(
            double_logistic_season(
                days,
                sos,
                eos,
                base=rng.uniform(0.1, 0.2),
                amplitude=rng.uniform(0.5, 0.7),
                rise=rng.uniform(7, 11),
                fall=rng.uniform(7, 11),
                noise=noise,
                rng=rng,
            )
        )
    return out


RICE, CROP, FOREST, URBAN, WATER = range(5)


@dataclass(frozen=True)
class RiceScenario:
    X: np.ndarray
    feature_names: tuple
    truth_class: np.ndarray
    reference_idx: np.ndarray
    reference_labels: np.ndarray  # noisy rice flags on the reference subset
    days: np.ndarray

    @property
    def is_rice(self) -> np.ndarray:
        return self.truth_class == RICE


def _cover_signals(cover: int, t: np.ndarray, amp: np.ndarray):
    """NDVI and NDWI of one land cover at shifted days ``t``."""
    shape = t.shape
    if cover == RICE:
        grow = _logistic((t - 175) / 9) - _logistic((t - 265) / 9)
        flood = np.exp(-0.5 * ((t - 140) / 14) ** 2)
        return 0.12 + 0.65 * amp * grow - 0.1 * flood, -0.15 + 0.55 * flood - 0.35 * grow
    if cover == CROP:
        grow = _logistic((t - 160) / 12) - _logistic((t - 240) / 12)
        return 0.18 + 0.55 * amp * grow, -0.2 - 0.3 * grow
    if cover == FOREST:
        return 0.7 + 0.1 * amp * np.sin((t - 100) / 210 * np.pi), np.full(shape, -0.55)
    if cover == URBAN:
        return 0.12 * amp + np.zeros(shape), np.full(shape, -0.1)
    return np.full(shape, -0.05), 0.45 * amp + np.zeros(shape)


def rice_scenario(
    n: int = 20_000,
    seed: int = 0,
    reference_fraction: float = 0.05,
    label_noise: float = 0.02,
    step: int = 10,
    noise: float = 0.03,
    shares=(0.25, 0.25, 0.15, 0.15, 0.20),
    mixed: float = 0.08,
) -> RiceScenario:
    """Per-pixel NDVI and NDWI series for paddy rice and four other covers.

    Rice floods before transplanting (NDWI high, NDVI near zero) and then
    greens up. Other crops green up at a similar time without flooding;
    forest stays green, urban stays bare and water stays wet. A ``mixed``
    share of pixels sits on rice edges: a linear blend of rice and another
    cover, counted as rice when the rice fraction is at least one half. A
    random ``reference_fraction`` of pixels carries rice flags, a
    ``label_noise`` share of which are flipped.
    """
    rng = np.random.default_rng(seed)
    days = np.arange(100, 311, step, dtype=np.float64)
    cls = rng.choice(5, size=n, p=np.asarray(shares) / np.sum(shares))
    # paddies follow a shared irrigation calendar; other covers vary more
    is_rice = (cls == RICE)[:, None]
    shift = np.where(is_rice, rng.normal(0, 3, n)[:, None], rng.normal(0, 15, n)[:, None])
    amp = np.where(is_rice, rng.uniform(0.95, 1.05, n)[:, None], rng.uniform(0.6, 1.4, n)[:, None])
    t = days[None, :] - shift

    ndvi = np.empty((n, days.size))
    ndwi = np.empty((n, days.size))
    for c in range(5):
        sel = cls == c
        v, w = _cover_signals(c, t[sel], amp[sel])
        ndvi[sel], ndwi[sel] = v, w

    edge = np.nonzero(rng.random(n) < mixed)[0]
    frac = rng.uniform(0, 1, edge.size)[:, None]
    other = rng.choice([CROP, FOREST, URBAN, WATER], size=edge.size)
    t_rice = days[None, :] - rng.normal(0, 3, edge.size)[:, None]
    rv, rw = _cover_signals(RICE, t_rice, np.ones((edge.size, 1)))
    for c in (CROP, FOREST, URBAN, WATER):
        sel = other == c
        ov, ow = _cover_signals(c, t[edge[sel]], amp[edge[sel]])
        ndvi[edge[sel]] = frac[sel] * rv[sel] + (1 - frac[sel]) * ov
        ndwi[edge[sel]] = frac[sel] * rw[sel] + (1 - frac[sel]) * ow
    cls[edge] = np.where(frac[:, 0] >= 0.5, RICE, other)

    ndvi += rng.normal(0, noise, ndvi.shape)
    ndwi += rng.normal(0, noise, ndwi.shape)
    X = np.hstack([ndvi, ndwi])
    names = tuple(f"NDVI_{int(d)}" for d in days) + tuple(f"NDWI_{int(d)}" for d in days)

    ref_idx = np.sort(rng.choice(n, int(round(reference_fraction * n)), replace=False))
    ref = cls[ref_idx] == RICE
    flip = rng.random(ref.size) < label_noise
    ref = np.where(flip, ~ref, ref)
    return RiceScenario(X, names, cls, ref_idx, ref, days)


# typical stage durations in days (root establishment .. boll opening)
STAGE_DAYS = (20.0, 32.0, 22.0, 40.0, 22.0, 35.0)
# per-stage prototype values of the phenology features
STAGE_PROTOTYPES = {
    "NDVI": (0.15, 0.32, 0.55, 0.80, 0.70, 0.42),
    "NDWI": (-0.05, -0.20, -0.38, -0.55, -0.45, -0.25),
    "PSRI": (0.05, 0.00, -0.03, -0.02, 0.08, 0.25),
}


@dataclass(frozen=True)
class CottonField:
    field_id: str
    sowing: float
    boundaries: np.ndarray  # start days of the six stages plus the end of boll opening

    def progress(self, day) -> np.ndarray:
        """Continuous progress in [0, 6): integer part = stage index (0 = RE)."""
        p = np.interp(np.asarray(day, dtype=np.float64), self.boundaries, np.arange(7.0))
        return np.clip(p, 0.0, 6.0 - 1e-9)

    def continuous(self, day) -> np.ndarray:
        """True value on the 100-700 continuous stage scale."""
        return 100.0 + 100.0 * self.progress(day)

    def stage_window(self, stage: int) -> tuple[float, float]:
        return float(self.boundaries[stage - 1]), float(self.boundaries[stage])


@dataclass(frozen=True)
class CottonScenario:
    fields: tuple
    days: np.ndarray
    table: "object"  # long DataFrame: field_id, day, variable, value
    daily: dict  # field_id -> {feature: TimeSeries} on a daily grid


def cotton_scenario(
    n_fields: int = 80,
    n_dates: int = 30,
    seed: int = 0,
    first_day: float = 110.0,
    last_day: float = 280.0,
    noise: float = 0.03,
    blend: float = 0.3,
) -> CottonScenario:
    """Cotton fields with staggered sowing and field-specific development speed.

    Feature values blend per-stage prototypes with Gaussian weights in
    progress space (width ``blend`` stages), so transitions between stages
    look mixed. ``AGDD`` is thermal progress accumulated since sowing.
    Returns observations on ``n_dates`` shared acquisition days and noise-free
    daily series for reference-parcel work.
    """
    import pandas as pd

    from .sits import TimeSeries

    rng = np.random.default_rng(seed)
    days = np.round(np.linspace(first_day, last_day, n_dates))
    daily_days = np.arange(60.0, 366.0)
    centers = np.arange(6) + 0.5
    protos = {k: np.asarray(v) for k, v in STAGE_PROTOTYPES.items()}

    def signals(p):
        w = np.exp(-0.5 * ((p[:, None] - centers[None, :]) / blend) ** 2)
        w /= w.sum(axis=1, keepdims=True)
        out = {k: w @ v for k, v in protos.items()}
        out["AGDD"] = 100.0 * p
        return out

    fields, rows, daily = [], [], {}
    for i in range(n_fields):
        sowing = rng.uniform(100, 115)
        speed = rng.uniform(0.85, 1.15)
        bounds = sowing + np.concatenate([[0.0], np.cumsum(np.asarray(STAGE_DAYS) * speed)])
        f = CottonField(f"F{i:03d}", float(sowing), bounds)
        fields.append(f)
        sig = signals(f.progress(days))
        for k, v in sig.items():
            scale = noise if k != "AGDD" else 100.0 * noise
            v = v + rng.normal(0, scale, v.size)
            rows.extend(zip([f.field_id] * days.size, days.tolist(), [k] * days.size, v.tolist()))
        dsig = signals(f.progress(daily_days))
        daily[f.field_id] = {k: TimeSeries(daily_days, v) for k, v in dsig.items()}
    table = pd.DataFrame(rows, columns=["field_id", "day", "variable", "value"])
    return CottonScenario(tuple(fields), days, table, daily)


@dataclass(frozen=True)
class SamplingScenario:
    runs: tuple  # ClassificationRun per run, chronological
    declared: dict  # parcel -> declared crop
    truth: dict  # parcel -> cultivated crop
    false_ids: frozenset  # parcels whose declaration is wrong


def sampling_scenario(
    n: int = 1000,
    n_runs: int = 8,
    false_rate: float = 0.03,
    seed: int = 0,
    reliability=(0.55, 0.97),
    crops=None,
) -> SamplingScenario:
    """Classification runs over parcels, a share of which are falsely declared.

    In run ``r`` the classifier finds the cultivated crop with probability
    rising linearly over ``reliability``. Correct predictions get a score gap
    drawn from U(0.3, 1); wrong ones from U(0, 1.5 (1 - q)), so confident
    errors fade as the season advances.
    """
    from .cap import DEFAULT_TAXONOMY, ClassificationRun

    rng = np.random.default_rng(seed)
    crops = list(crops) if crops is not None else [c.code for c in DEFAULT_TAXONOMY][:10]
    k = len(crops)
    ids = [f"P{i:05d}" for i in range(n)]
    true_idx = rng.integers(0, k, n)
    decl_idx = true_idx.copy()
    n_false = int(round(false_rate * n))
    false_rows = rng.choice(n, n_false, replace=False)
    decl_idx[false_rows] = (true_idx[false_rows] + rng.integers(1, k, n_false)) % k
    q = np.linspace(reliability[0], reliability[1], n_runs)
    runs = []
    for r in range(n_runs):
        run = ClassificationRun(run_day=float(120 + 15 * r))
        ok = rng.random(n) < q[r]
        pred = np.where(ok, true_idx, (true_idx + rng.integers(1, k, n)) % k)
        gap = np.where(ok, rng.uniform(0.3, 1.0, n), rng.uniform(0.0, 1.5 * (1 - q[r]), n))
        gap = np.minimum(gap, 1.0)
        u = rng.uniform(0.5, 1.0, n)
        runner = (pred + rng.integers(1, k, n)) % k
        for i in range(n):
            s = np.full(k, (1 - gap[i]) * (1 - u[i]) / (k - 2))
            b = (1 - gap[i]) * u[i] / 2
            s[runner[i]] = b
            s[pred[i]] = gap[i] + b
            run.add(ids[i], crops[pred[i]], crops[decl_idx[i]], s)
        runs.append(run)
    return SamplingScenario(
        tuple(runs),
        {p: crops[d] for p, d in zip(ids, decl_idx)},
        {p: crops[t] for p, t in zip(ids, true_idx)},
        frozenset(ids[i] for i in false_rows),
    )
