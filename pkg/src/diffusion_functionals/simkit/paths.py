"""Path samplers: Euler-Maruyama diffusions with absorption, Brownian motion,
Bessel(3) and squared Bessel(2)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Optional, Sequence

import numpy as np

from ..coeffspec import Problem
from .local_time import OccupationAccumulator
from .seeding import STREAM_DIFFUSION, path_seed, path_seeds, run_blocks

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]
ExitKind = Literal["no_exit", "exit", "aborted"]
EndpointName = Literal["l", "r"]

# proximity threshold in units of sigma * sqrt(h)
_PROXIMITY = 10.0
_NORMAL_BUFFER = 1024
_CHUNK = 4096
# record marks at horizon * 2^-j for j up to this depth
_MARK_DEPTH = 24
_ITERATION_FACTOR = 50


class SimulationError(RuntimeError):
    """Raised when a sampler is called with unusable parameters."""


@dataclass(frozen=True, slots=True)
class ExitRecord:
    kind: ExitKind
    time: float
    endpoint: Optional[EndpointName] = None
    diagnostic: Optional[str] = None


@dataclass(slots=True)
class PathSample:
    times: np.ndarray
    values: np.ndarray
    exit: ExitRecord
    driving_seed: int
    # running integral of ``integrand`` at each recorded time
    integral: Optional[np.ndarray] = None
    integrand: Optional[str] = None
    index: int = 0

    @property
    def terminal_time(self) -> float:
        return float(self.times[-1])

    @property
    def terminal_value(self) -> float:
        return float(self.values[-1])

    @property
    def exited(self) -> bool:
        return self.exit.kind == "exit"

    def integral_at(self, t: np.ndarray) -> np.ndarray:
        if self.integral is None:
            raise SimulationError("path was simulated without an integrand")
        return np.interp(np.asarray(t, dtype=float), self.times, self.integral)


def _check_step(dt: float, horizon: float) -> None:
    if not dt > 0.0 or not horizon > 0.0:
        raise SimulationError(f"need dt > 0 and horizon > 0, got dt={dt}, horizon={horizon}")


def _halvings(dist: np.ndarray, sigma: np.ndarray, dt: float, max_halvings: int) -> np.ndarray:
    """Least m with dist >= 10 |sigma| sqrt(dt / 2^m), capped."""

    with np.errstate(all="ignore"):
        need = dt * (_PROXIMITY * np.abs(sigma) / dist) ** 2
        m = np.ceil(np.log2(need))
    m = np.where(np.isfinite(m), m, np.where(need > 1.0, max_halvings, 0.0))
    return np.clip(m, 0, max_halvings).astype(int)


def _mark_grid(horizon: float) -> np.ndarray:
    return horizon * 2.0 ** -np.arange(_MARK_DEPTH, -1, -1, dtype=float)


def _integrand_values(integrand: Optional[Evaluator], y: np.ndarray) -> np.ndarray:
    if integrand is None:
        return np.zeros_like(y)
    with np.errstate(all="ignore"):
        return np.broadcast_to(np.asarray(integrand(y), dtype=float), y.shape).copy()


class _NormalStreams:
    """One normal per path per iteration, each path drawing from its own stream."""

    def __init__(self, seeds: Sequence[int], width: int = _NORMAL_BUFFER) -> None:
        self.rngs = [np.random.default_rng(seed) for seed in seeds]
        self.width = width
        self.block = np.empty((len(self.rngs), width))
        self.column = width

    def next(self) -> np.ndarray:
        if self.column == self.width:
            for i, rng in enumerate(self.rngs):
                self.block[i] = rng.standard_normal(self.width)
            self.column = 0
        out = self.block[:, self.column]
        self.column += 1
        return out


class _Log:
    """Recorded (index, t, y, integral) entries in time order per path."""

    def __init__(self) -> None:
        self.index: List[np.ndarray] = []
        self.t: List[np.ndarray] = []
        self.y: List[np.ndarray] = []
        self.integral: List[np.ndarray] = []

    def add(self, index: np.ndarray, t: np.ndarray, y: np.ndarray, integral: np.ndarray) -> None:
        if index.size:
            self.index.append(index.copy())
            self.t.append(t.copy())
            self.y.append(y.copy())
            self.integral.append(integral.copy())

    def split(self, n: int) -> List[tuple]:
        index = np.concatenate(self.index)
        order = np.argsort(index, kind="stable")
        counts = np.bincount(index, minlength=n)
        bounds = np.concatenate([[0], np.cumsum(counts)])
        t = np.concatenate(self.t)[order]
        y = np.concatenate(self.y)[order]
        integral = np.concatenate(self.integral)[order]
        return [
            (t[bounds[i] : bounds[i + 1]], y[bounds[i] : bounds[i + 1]], integral[bounds[i] : bounds[i + 1]])
            for i in range(n)
        ]


def _euler_batch(
    p: Problem,
    seeds: Sequence[int],
    indices: Sequence[int],
    *,
    dt: float,
    horizon: float,
    integrand: Optional[Evaluator],
    integrand_label: Optional[str],
    record_stride: int,
    max_halvings: int,
) -> List[PathSample]:
    """Advance a block of paths in lockstep; each path picks its own step."""

    l, r = p.space.l, p.space.r
    n = len(seeds)
    y = np.full(n, p.space.x0)
    t = np.zeros(n)
    integral = np.zeros(n)
    f_now = _integrand_values(integrand, y)
    alive = np.ones(n, dtype=bool)
    kinds: List[ExitKind] = ["no_exit"] * n
    exit_time = np.full(n, horizon)
    exit_side: List[Optional[EndpointName]] = [None] * n
    diagnostics: Dict[int, str] = {}
    marks = np.full(n, _mark_grid(horizon)[0])
    floor = _PROXIMITY * math.sqrt(dt / 2.0**max_halvings)
    budget = int(_ITERATION_FACTOR * horizon / dt) + 10_000
    log = _Log()
    log.add(np.arange(n), t, y, integral)
    streams = _NormalStreams(seeds)
    iteration = 0

    def finish(ids: np.ndarray, kind: ExitKind, note: Optional[str] = None) -> None:
        alive[ids] = False
        for i in ids.tolist():
            kinds[i] = kind
            exit_time[i] = t[i]
            if note is not None:
                diagnostics[i] = note
        log.add(ids, t[ids], y[ids], integral[ids])

    while alive.any():
        z = streams.next()
        iteration += 1
        idx = np.flatnonzero(alive)
        if iteration > budget:
            finish(idx, "aborted", "iteration budget exhausted")
            break
        yi = y[idx]
        with np.errstate(all="ignore"):
            mu = np.broadcast_to(p.mu_eval(yi), yi.shape)
            sigma = np.broadcast_to(p.sigma_eval(yi), yi.shape)
        bad = ~(np.isfinite(mu) & np.isfinite(sigma))
        if bad.any():
            for i in idx[bad].tolist():
                logger.debug("path_aborted index=%s y=%s", indices[i], y[i])
            finish(idx[bad], "aborted", "coefficient undefined on the path")
            keep = ~bad
            idx, yi, mu, sigma = idx[keep], yi[keep], mu[keep], sigma[keep]
            if idx.size == 0:
                continue

        dist = np.minimum(yi - l, r - yi)
        absorbed = dist < floor * np.abs(sigma)
        if absorbed.any():
            hit = idx[absorbed]
            near_left = (yi[absorbed] - l) <= (r - yi[absorbed])
            for i, left in zip(hit.tolist(), near_left.tolist()):
                exit_side[i] = "l" if left else "r"
                y[i] = l if left else r
            finish(hit, "exit")
            keep = ~absorbed
            idx, yi, mu, sigma, dist = idx[keep], yi[keep], mu[keep], sigma[keep], dist[keep]
            if idx.size == 0:
                continue

        m = _halvings(dist, sigma, dt, max_halvings)
        h = np.minimum(dt / 2.0**m, horizon - t[idx])
        y_new = yi + mu * h + sigma * np.sqrt(h) * z[idx]
        cross_l = y_new <= l
        cross_r = y_new >= r
        crossed = cross_l | cross_r
        if crossed.any():
            ci = idx[crossed]
            edge = np.where(cross_l[crossed], l, r)
            with np.errstate(all="ignore"):
                theta = np.clip((yi[crossed] - edge) / (yi[crossed] - y_new[crossed]), 0.0, 1.0)
            step = theta * h[crossed]
            integral[ci] += f_now[ci] * step
            t[ci] += step
            y[ci] = edge
            for i, left in zip(ci.tolist(), cross_l[crossed].tolist()):
                exit_side[i] = "l" if left else "r"
            finish(ci, "exit")
        moved = ~crossed
        if moved.any():
            mi = idx[moved]
            y_next = y_new[moved]
            if not np.all(np.isfinite(y_next)):
                broken = mi[~np.isfinite(y_next)]
                finish(broken, "aborted", "state overflow")
                ok = np.isfinite(y_next)
                mi, y_next, h_ok, m_ok = mi[ok], y_next[ok], h[moved][ok], m[moved][ok]
            else:
                h_ok, m_ok = h[moved], m[moved]
            f_next = _integrand_values(integrand, y_next)
            integral[mi] += 0.5 * (f_now[mi] + f_next) * h_ok
            f_now[mi] = f_next
            t[mi] += h_ok
            y[mi] = y_next
            done = t[mi] >= horizon * (1.0 - 1e-12)
            crossed_mark = t[mi] >= marks[mi]
            if crossed_mark.any():
                marked = mi[crossed_mark]
                marks[marked] = np.maximum(marks[marked] * 2.0, t[marked] * 1.0000001)
            record = (iteration % record_stride == 0) | (m_ok > 0) | crossed_mark
            record &= ~done
            log.add(mi[record], t[mi[record]], y[mi[record]], integral[mi[record]])
            if done.any():
                finish(mi[done], "no_exit")

    samples: List[PathSample] = []
    for i, (ts, ys, integrals) in enumerate(log.split(n)):
        samples.append(
            PathSample(
                times=ts,
                values=ys,
                exit=ExitRecord(
                    kind=kinds[i],
                    time=float(exit_time[i]),
                    endpoint=exit_side[i],
                    diagnostic=diagnostics.get(i),
                ),
                driving_seed=int(seeds[i]),
                integral=integrals if integrand is not None else None,
                integrand=integrand_label,
                index=int(indices[i]),
            )
        )
    return samples


# ---------------------------------------------------------------------------
# Brownian motion with barriers
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class _BrownianState:
    t: float
    y: float
    integral: float
    f_y: float
    steps: int = 0


def _brownian_refined(
    rng: np.random.Generator,
    state: _BrownianState,
    *,
    l: float,
    r: float,
    dt: float,
    horizon: float,
    max_halvings: int,
) -> tuple:
    """Scalar steps with the halving rule until the path leaves the barrier
    zone, exits or reaches the horizon."""

    guard = _PROXIMITY * math.sqrt(dt)
    floor = _PROXIMITY * math.sqrt(dt / 2.0**max_halvings)
    ts = [state.t]
    ys = [state.y]
    t, y = state.t, state.y
    exit_side: Optional[EndpointName] = None
    normals = rng.standard_normal(256)
    used = 0
    while True:
        dist = min(y - l, r - y)
        if dist < floor:
            exit_side = "l" if y - l <= r - y else "r"
            ys[-1] = l if exit_side == "l" else r
            break
        if dist >= 2.0 * guard or t >= horizon * (1.0 - 1e-12):
            break
        need = dt * (_PROXIMITY / dist) ** 2
        m = 0 if need <= 1.0 else min(max_halvings, math.ceil(math.log2(need)))
        h = min(dt / 2.0**m, horizon - t)
        if used == normals.size:
            normals = rng.standard_normal(256)
            used = 0
        y_new = y + math.sqrt(h) * float(normals[used])
        used += 1
        if y_new <= l or y_new >= r:
            edge = l if y_new <= l else r
            theta = min(max((y - edge) / (y - y_new), 0.0), 1.0)
            t += theta * h
            exit_side = "l" if edge == l else "r"
            ts.append(t)
            ys.append(edge)
            break
        t += h
        y = y_new
        ts.append(t)
        ys.append(y)
    return np.asarray(ts), np.asarray(ys), exit_side


def _brownian_path(
    x0: float,
    l: float,
    r: float,
    *,
    dt: float,
    horizon: float,
    seed: int,
    index: int = 0,
    integrand: Optional[Evaluator] = None,
    integrand_label: Optional[str] = None,
    occupation: Sequence[OccupationAccumulator] = (),
    record: bool = True,
    record_stride: int = 10,
    max_halvings: int = 30,
) -> PathSample:
    """Gaussian chunks away from the barriers, refined scalar steps near them."""

    _check_step(dt, horizon)
    rng = np.random.default_rng(seed)
    guard = _PROXIMITY * math.sqrt(dt)
    marks = _mark_grid(horizon)
    f0 = float(_integrand_values(integrand, np.asarray([x0]))[0])
    state = _BrownianState(t=0.0, y=float(x0), integral=0.0, f_y=f0)
    rec_t: List[np.ndarray] = [np.array([0.0])]
    rec_y: List[np.ndarray] = [np.array([float(x0)])]
    rec_i: List[np.ndarray] = [np.array([0.0])]
    exit_side: Optional[EndpointName] = None

    while exit_side is None and state.t < horizon * (1.0 - 1e-12):
        if min(state.y - l, r - state.y) < 2.0 * guard:
            ts, ys, exit_side = _brownian_refined(
                rng, state, l=l, r=r, dt=dt, horizon=horizon, max_halvings=max_halvings
            )
            if ts.size < 2:
                if exit_side is not None:
                    rec_t.append(ts.copy())
                    rec_y.append(ys.copy())
                    rec_i.append(np.array([state.integral]))
                    state.y = float(ys[-1])
                continue
            hs = np.diff(ts)
            f_vals = _integrand_values(integrand, ys)
            f_vals[0] = state.f_y
            pieces = 0.5 * (f_vals[:-1] + f_vals[1:]) * hs
            if exit_side is not None:
                # final step into the endpoint uses the left-point value
                pieces[-1] = f_vals[-2] * hs[-1]
            running = state.integral + np.cumsum(pieces)
            for acc in occupation:
                acc.add(ys[:-1], hs)
            if record:
                rec_t.append(ts[1:])
                rec_y.append(ys[1:])
                rec_i.append(running)
            state = _BrownianState(
                t=float(ts[-1]),
                y=float(ys[-1]),
                integral=float(running[-1]),
                f_y=float(f_vals[-1]),
                steps=state.steps + hs.size,
            )
            continue

        n = max(1, min(_CHUNK, math.ceil((horizon - state.t) / dt - 1e-9)))
        hs = np.full(n, dt)
        hs[-1] = max(horizon - state.t - (n - 1) * dt, 0.0) if state.t + n * dt > horizon else dt
        z = rng.standard_normal(n)
        path = state.y + np.cumsum(np.sqrt(hs) * z)
        danger = (path - l < guard) | (r - path < guard)
        k = int(np.argmax(danger)) if danger.any() else n
        if k == 0:
            continue
        hs = hs[:k]
        path = path[:k]
        times = state.t + np.cumsum(hs)
        prev = np.concatenate([[state.y], path[:-1]])
        f_path = _integrand_values(integrand, path)
        f_prev = np.concatenate([[state.f_y], f_path[:-1]])
        running = state.integral + np.cumsum(0.5 * (f_prev + f_path) * hs)
        for acc in occupation:
            acc.add(prev, hs)
        if record:
            steps = state.steps + np.arange(1, k + 1)
            keep = steps % record_stride == 0
            keep[np.searchsorted(times, marks[(marks > state.t) & (marks <= times[-1])])] = True
            keep[-1] = keep[-1] or times[-1] >= horizon * (1.0 - 1e-12)
            rec_t.append(times[keep])
            rec_y.append(path[keep])
            rec_i.append(running[keep])
        state = _BrownianState(
            t=float(times[-1]),
            y=float(path[-1]),
            integral=float(running[-1]),
            f_y=float(f_path[-1]),
            steps=state.steps + k,
        )

    times = np.concatenate(rec_t)
    values = np.concatenate(rec_y)
    integral = np.concatenate(rec_i)
    if times[-1] < state.t:
        times = np.append(times, state.t)
        values = np.append(values, state.y)
        integral = np.append(integral, state.integral)
    if not record:
        times, values, integral = times[[0, -1]], values[[0, -1]], integral[[0, -1]]
    exit_record = (
        ExitRecord(kind="exit", time=float(times[-1]), endpoint=exit_side)
        if exit_side is not None
        else ExitRecord(kind="no_exit", time=float(horizon))
    )
    return PathSample(
        times=times,
        values=values,
        exit=exit_record,
        driving_seed=int(seed),
        integral=integral if integrand is not None else None,
        integrand=integrand_label,
        index=index,
    )


# ---------------------------------------------------------------------------
# Public samplers
# ---------------------------------------------------------------------------


def simulate_diffusion(
    p: Problem,
    dt: float,
    horizon: float,
    seed: int,
    *,
    integrand: Optional[Evaluator] = None,
    integrand_label: Optional[str] = None,
    record_stride: int = 10,
    max_halvings: int = 30,
    index: int = 0,
) -> PathSample:
    """One absorbed Euler-Maruyama path; standard Brownian problems use the
    exact Gaussian sampler."""

    _check_step(dt, horizon)
    if p.is_standard_brownian():
        return _brownian_path(
            p.space.x0,
            p.space.l,
            p.space.r,
            dt=dt,
            horizon=horizon,
            seed=seed,
            index=index,
            integrand=integrand,
            integrand_label=integrand_label,
            record_stride=record_stride,
            max_halvings=max_halvings,
        )
    return _euler_batch(
        p,
        [seed],
        [index],
        dt=dt,
        horizon=horizon,
        integrand=integrand,
        integrand_label=integrand_label,
        record_stride=record_stride,
        max_halvings=max_halvings,
    )[0]


def simulate_paths(
    p: Problem,
    n_paths: int,
    *,
    dt: float,
    horizon: float,
    master_seed: int,
    stream: int = STREAM_DIFFUSION,
    integrand: Optional[Evaluator] = None,
    integrand_label: Optional[str] = None,
    record_stride: int = 10,
    max_halvings: int = 30,
    block_size: int = 256,
    threads: int = 1,
) -> List[PathSample]:
    """n_paths independent paths; path i is driven by path_seed(master_seed, i)."""

    _check_step(dt, horizon)
    seeds = path_seeds(master_seed, n_paths, stream)
    brownian = p.is_standard_brownian()

    def task(block: Sequence[int]) -> List[PathSample]:
        if brownian:
            return [
                _brownian_path(
                    p.space.x0,
                    p.space.l,
                    p.space.r,
                    dt=dt,
                    horizon=horizon,
                    seed=seeds[i],
                    index=i,
                    integrand=integrand,
                    integrand_label=integrand_label,
                    record_stride=record_stride,
                    max_halvings=max_halvings,
                )
                for i in block
            ]
        return _euler_batch(
            p,
            [seeds[i] for i in block],
            list(block),
            dt=dt,
            horizon=horizon,
            integrand=integrand,
            integrand_label=integrand_label,
            record_stride=record_stride,
            max_halvings=max_halvings,
        )

    paths = run_blocks(task, n_paths, block_size, threads)
    logger.info(
        "paths_simulated n=%s exits=%s aborted=%s",
        n_paths,
        sum(path.exited for path in paths),
        sum(path.exit.kind == "aborted" for path in paths),
    )
    return paths


def simulate_bm_to_hit(
    x0: float,
    r: float,
    dt: float,
    seed: int,
    max_time: float,
    *,
    integrand: Optional[Evaluator] = None,
    integrand_label: Optional[str] = None,
    occupation: Sequence[OccupationAccumulator] = (),
    record: bool = True,
    record_stride: int = 10,
    max_halvings: int = 30,
    index: int = 0,
) -> PathSample:
    """Brownian motion from x0 stopped at its first crossing of r."""

    if x0 > r:
        raise SimulationError("simulate_bm_to_hit needs x0 <= r")
    if x0 == r:
        zero = np.zeros(1)
        return PathSample(
            times=zero,
            values=np.array([float(r)]),
            exit=ExitRecord(kind="exit", time=0.0, endpoint="r"),
            driving_seed=int(seed),
            integral=zero.copy() if integrand is not None else None,
            integrand=integrand_label,
            index=index,
        )
    return _brownian_path(
        x0,
        -math.inf,
        r,
        dt=dt,
        horizon=max_time,
        seed=seed,
        index=index,
        integrand=integrand,
        integrand_label=integrand_label,
        occupation=occupation,
        record=record,
        record_stride=record_stride,
        max_halvings=max_halvings,
    )


def simulate_bessel3(
    dt: float,
    horizon: float,
    seed: int,
    level: Optional[float] = None,
    *,
    index: int = 0,
) -> PathSample:
    """Bessel(3) from 0 as the norm of three Brownian coordinates.

    With ``level`` the step coarsens to max(dt, (rho - level)^2 / 16) once
    the radius exceeds twice the level, and the path stops at radius
    1000 * level.
    """

    _check_step(dt, horizon)
    if level is not None and not level > 0.0:
        raise SimulationError("level must be positive")
    rng = np.random.default_rng(seed)
    position = np.zeros(3)
    t = 0.0
    radius = 0.0
    stop_radius = 1000.0 * level if level is not None else math.inf
    ts: List[np.ndarray] = [np.array([0.0])]
    rs: List[np.ndarray] = [np.array([0.0])]
    while t < horizon * (1.0 - 1e-12) and radius <= stop_radius:
        if level is None or radius <= 2.0 * level:
            n = max(1, min(_CHUNK, math.ceil((horizon - t) / dt - 1e-9)))
            hs = np.full(n, dt)
            if t + n * dt > horizon:
                hs[-1] = max(horizon - t - (n - 1) * dt, 0.0)
            steps = rng.standard_normal((n, 3)) * np.sqrt(hs)[:, None]
            coords = position + np.cumsum(steps, axis=0)
            radii = np.linalg.norm(coords, axis=1)
            k = n
            if level is not None:
                beyond = radii > 2.0 * level
                if beyond.any():
                    k = int(np.argmax(beyond)) + 1
            times = t + np.cumsum(hs[:k])
            ts.append(times)
            rs.append(radii[:k])
            position = coords[k - 1]
            t = float(times[-1])
            radius = float(radii[k - 1])
        else:
            h = min(max(dt, (radius - level) ** 2 / 16.0), horizon - t)
            position = position + rng.standard_normal(3) * math.sqrt(h)
            t += h
            radius = float(np.linalg.norm(position))
            ts.append(np.array([t]))
            rs.append(np.array([radius]))
    times = np.concatenate(ts)
    values = np.concatenate(rs)
    return PathSample(
        times=times,
        values=values,
        exit=ExitRecord(kind="no_exit", time=float(times[-1])),
        driving_seed=int(seed),
        index=index,
    )


def last_exit(path: PathSample, level: float) -> float:
    """sup{t : value_t <= level}, interpolated; NaN if the path ends at or
    below the level."""

    values = np.asarray(path.values)
    below = np.flatnonzero(values <= level)
    if below.size == 0:
        return 0.0
    i = int(below[-1])
    if i == values.size - 1:
        return math.nan
    v0, v1 = values[i], values[i + 1]
    t0, t1 = path.times[i], path.times[i + 1]
    return float(t0 + (level - v0) / (v1 - v0) * (t1 - t0))


def first_hit(path: PathSample, level: float) -> float:
    """inf{t : value_t >= level}, interpolated; NaN if never reached."""

    values = np.asarray(path.values)
    above = np.flatnonzero(values >= level)
    if above.size == 0:
        return math.nan
    i = int(above[0])
    if i == 0:
        return float(path.times[0])
    v0, v1 = values[i - 1], values[i]
    t0, t1 = path.times[i - 1], path.times[i]
    return float(t0 + (level - v0) / (v1 - v0) * (t1 - t0))


def horizon_too_short(path: PathSample, level: float) -> bool:
    return path.terminal_value < 2.0 * level


def simulate_squared_bessel2(u_grid: Sequence[float], seed: int) -> np.ndarray:
    """eta_u = W1_u^2 + W2_u^2 sampled exactly at the grid times."""

    grid = np.asarray(u_grid, dtype=float)
    if grid.size == 0:
        return np.zeros(0)
    if np.any(grid <= 0.0) or not np.all(np.isfinite(grid)):
        raise SimulationError("u_grid must lie in (0, inf)")
    order = np.argsort(grid, kind="stable")
    sorted_grid = grid[order]
    rng = np.random.default_rng(seed)
    increments = np.sqrt(np.diff(np.concatenate([[0.0], sorted_grid])))
    coords = np.cumsum(rng.standard_normal((grid.size, 2)) * increments[:, None], axis=0)
    eta = np.sum(coords * coords, axis=1)
    out = np.empty_like(eta)
    out[order] = eta
    return out


def bessel3_on_grid(times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bessel(3) from 0 at increasing ``times`` via exact coordinate increments."""

    times = np.asarray(times, dtype=float)
    increments = np.sqrt(np.diff(np.concatenate([[0.0], times])))
    coords = np.cumsum(rng.standard_normal((times.size, 3)) * increments[:, None], axis=0)
    return np.linalg.norm(coords, axis=1)


__all__ = [
    "ExitKind",
    "ExitRecord",
    "PathSample",
    "SimulationError",
    "bessel3_on_grid",
    "first_hit",
    "horizon_too_short",
    "last_exit",
    "path_seed",
    "simulate_bessel3",
    "simulate_bm_to_hit",
    "simulate_diffusion",
    "simulate_paths",
    "simulate_squared_bessel2",
]
