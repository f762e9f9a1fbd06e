"""Decentralized ball-detection rigs: visibility, distance-dependent noise,
processing latency, dropout, and the merged asynchronous measurement stream.

Each rig runs at its own frame rate and reports position fixes with an
isotropic stddev sigma(D) = a D^2 + b D + c, where D is the ball's distance
to that camera. Fixes arrive latency_mean +/- uniform jitter after capture,
so the pooled stream is ordered by arrival, not capture; downstream
consumers must cope with capture-time inversions.
"""
from __future__ import annotations

import math
import socket
import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .world import BallState, CourtGeometry

# Quadratic depth-error coefficients fitted to the linear-rail calibration
# bands (RAIL_CALIBRATION_BANDS below, half band width = one stddev).
NOISE_A = 0.0074964986
NOISE_B = -0.033720028
NOISE_C = 0.093645446

# (true depth, band low, band high) from the rail experiment.
RAIL_CALIBRATION_BANDS = [
    (3.05, 2.944, 3.046),
    (3.55, 3.418, 3.544),
    (4.05, 3.925, 4.129),
    (4.55, 4.46, 4.64),
    (5.05, 5.007, 5.183),
    (5.55, 5.396, 5.82),
    (6.05, 6.002, 6.262),
    (6.55, 6.536, 6.81),
    (7.05, 7.003, 7.441),
    (7.55, 7.559, 8.115),
    (8.05, 7.962, 8.902),
    (8.55, 8.641, 9.319),
    (9.05, 9.112, 9.64),
    (9.55, 9.497, 10.369),
    (10.05, 10.24, 11.28),
    (10.55, 10.496, 11.724),
]


class MeasurementFormatError(ValueError):
    """Raised on malformed wire records; field_index points at the offender
    (None when the field count itself is wrong)."""

    def __init__(self, message: str, field_index: Optional[int] = None):
        super().__init__(message)
        self.field_index = field_index


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """sigma(D) = a D^2 + b D + c, meters."""

    a: float = NOISE_A
    b: float = NOISE_B
    c: float = NOISE_C

    def sigma(self, d: float) -> float:
        return self.a * d * d + self.b * d + self.c

    def min_sigma(self, d_max: float) -> float:
        """Minimum of sigma over [0, d_max]."""
        candidates = [self.sigma(0.0), self.sigma(d_max)]
        if self.a != 0.0:
            vertex = -self.b / (2.0 * self.a)
            if 0.0 < vertex < d_max:
                candidates.append(self.sigma(vertex))
        return min(candidates)


@dataclass(frozen=True, eq=False)
class RigConfig:
    rig_id: int
    camera_pos: np.ndarray
    look_dir: np.ndarray
    fov_half_angle: float = 0.96
    max_range: float = 14.0
    rate: float = 25.0
    latency_mean: float = 0.100
    latency_jitter: float = 0.020
    noise: NoiseModel = field(default_factory=NoiseModel)
    dropout_prob: float = 0.05
    bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rig rate must be positive")
        if self.latency_mean < 0 or self.latency_jitter < 0:
            raise ValueError("latency must be non-negative")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must be in [0, 1)")
        if self.noise.min_sigma(self.max_range) <= 0.0:
            raise ValueError("noise sigma must stay positive out to max_range")
        n = np.linalg.norm(self.look_dir)
        if not math.isclose(n, 1.0, rel_tol=1e-6):
            raise ValueError("look_dir must be a unit vector")


@dataclass(frozen=True, eq=False)
class Measurement:
    rig_id: int
    t_capture: float
    t_arrival: float
    z: np.ndarray
    sigma: float

    def __post_init__(self):
        if self.t_arrival < self.t_capture:
            raise ValueError("measurement arrives before capture")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def fit_noise_model(samples: Sequence) -> NoiseModel:
    """Fit sigma(D) = a D^2 + b D + c to (distance, measured, true) samples.

    Samples are grouped into 0.5 m distance bins; the per-bin statistic is the
    RMS of (measured - true), which equals the error stddev for zero-mean
    noise and degrades gracefully to the error magnitude for a constant
    offset. Needs at least three distinct bins.
    """
    if len(samples) == 0:
        raise DegenerateFitError("no samples")
    bins: dict[int, list] = {}
    for d, meas, true in samples:
        bins.setdefault(int(round(float(d) / 0.5)), []).append(
            (float(d), float(meas) - float(true)))
    if len(bins) < 3:
        raise DegenerateFitError(
            f"need >= 3 distinct distance bins, got {len(bins)}")
    ds = []
    rms = []
    for entries in bins.values():
        dd = np.array([e[0] for e in entries])
        err = np.array([e[1] for e in entries])
        ds.append(dd.mean())
        rms.append(math.sqrt(float(np.mean(err * err))))
    A = np.vstack([np.square(ds), ds, np.ones(len(ds))]).T
    coef, *_ = np.linalg.lstsq(A, np.array(rms), rcond=None)
    return NoiseModel(a=float(coef[0]), b=float(coef[1]), c=float(coef[2]))


def observe(rig: RigConfig, truth: BallState, rng: np.random.Generator
            ) -> Optional[Measurement]:
    """One detection attempt at the rig's frame tick.

    Returns None when the ball is outside the FOV cone or range, or the frame
    is dropped. RNG consumption order is fixed (dropout, noise, latency) and
    nothing is drawn for invisible balls, so a rig's stream is reproducible
    from its own generator regardless of the other rigs.
    """
    rel = truth.p - rig.camera_pos
    dist = float(np.linalg.norm(rel))
    if dist <= 0.0 or dist > rig.max_range:
        return None
    cos_ang = float(np.dot(rel, rig.look_dir)) / dist
    if cos_ang < math.cos(rig.fov_half_angle):
        return None
    if rig.dropout_prob > 0.0 and rng.random() < rig.dropout_prob:
        return None
    s = rig.noise.sigma(dist)
    z = truth.p + rig.bias + s * rng.standard_normal(3)
    latency = rig.latency_mean + rng.uniform(-rig.latency_jitter,
                                             rig.latency_jitter)
    t_cap = round(truth.t, 6)
    return Measurement(
        rig_id=rig.rig_id,
        t_capture=t_cap,
        t_arrival=round(max(t_cap, truth.t + latency), 6),
        z=z,
        sigma=s,
    )


def merge_streams(streams: Iterable[Iterable[Measurement]]) -> list[Measurement]:
    """Pool per-rig outputs into one arrival-ordered stream.

    Sorted by t_arrival with (t_capture, rig_id) tie-breaks; capture times may
    arrive inverted and are left that way.
    """
    merged = [m for s in streams for m in s]
    merged.sort(key=lambda m: (m.t_arrival, m.t_capture, m.rig_id))
    return merged


def encode_measurement(m: Measurement) -> str:
    return "%d,%.6f,%.6f,%s,%s,%s,%s" % (
        m.rig_id, m.t_capture, m.t_arrival,
        repr(float(m.z[0])), repr(float(m.z[1])), repr(float(m.z[2])),
        repr(float(m.sigma)),
    )


def decode_measurement(record: str) -> Measurement:
    parts = record.strip().split(",")
    if len(parts) != 7:
        raise MeasurementFormatError(
            f"expected 7 fields, got {len(parts)}", field_index=None)
    vals = []
    for i, p in enumerate(parts):
        try:
            vals.append(int(p) if i == 0 else float(p))
        except ValueError:
            raise MeasurementFormatError(
                f"field {i} is not numeric: {p!r}", field_index=i) from None
        if i > 0 and not math.isfinite(vals[-1]):
            raise MeasurementFormatError(
                f"field {i} is not finite: {p!r}", field_index=i)
    if vals[2] < vals[1]:
        raise ValueError("measurement arrives before capture")
    return Measurement(
        rig_id=vals[0], t_capture=vals[1], t_arrival=vals[2],
        z=np.array(vals[3:6]), sigma=vals[6],
    )


def write_measurement_file(path, measurements: Iterable[Measurement]) -> None:
    with open(path, "w") as f:
        for m in measurements:
            f.write(encode_measurement(m) + "\n")


def read_measurement_file(path) -> list[Measurement]:
    out = []
    with open(path) as f:
        for line in f:
            if line.strip():
                out.append(decode_measurement(line))
    return out


def default_rig_layout(court: CourtGeometry, height: float = 4.0,
                       margin: float = 1.0,
                       noise: Optional[NoiseModel] = None,
                       dropout_prob: float = 0.05,
                       latency_mean: float = 0.100,
                       latency_jitter: float = 0.020) -> list[RigConfig]:
    """Six rigs, three per side, evenly spaced along the court just outside
    the sidelines at the given mast height. Each rig looks across the court
    at net height abeam its own station, so every interior point down to
    bounce height sits inside at least two FOV cones."""
    noise = noise or NoiseModel()
    rigs = []
    rig_id = 0
    for side in (-1.0, 1.0):
        y = side * (court.width_doubles / 2.0 + margin)
        for frac in (1.0 / 6.0, 0.5, 5.0 / 6.0):
            pos = np.array([court.length * frac, y, height])
            look = np.array([pos[0], 0.0, 1.0]) - pos
            look = look / np.linalg.norm(look)
            rigs.append(RigConfig(
                rig_id=rig_id, camera_pos=pos, look_dir=look,
                noise=noise, dropout_prob=dropout_prob,
                latency_mean=latency_mean, latency_jitter=latency_jitter,
            ))
            rig_id += 1
    return rigs


def send_measurements(host: str, port: int,
                      measurements: Iterable[Measurement]) -> None:
    """Write records to the fusion endpoint as one rig client would."""
    with socket.create_connection((host, port)) as sock:
        data = "".join(encode_measurement(m) + "\n" for m in measurements)
        sock.sendall(data.encode())


class MeasurementCollector:
    """Minimal fusion endpoint: accepts rig client connections and decodes
    newline-delimited records until each client closes.

    Usage:
        with MeasurementCollector(n_clients=6) as coll:
            ... clients send_measurements(coll.host, coll.port, ...) ...
        merged = merge_streams([coll.measurements])
    """

    def __init__(self, n_clients: int, host: str = "127.0.0.1"):
        self.host = host
        self.n_clients = n_clients
        self.measurements: list[Measurement] = []
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.bind((host, 0))
        self._server.listen(n_clients)
        self.port = self._server.getsockname()[1]
        self._lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._accept_thread: Optional[threading.Thread] = None

    def _handle(self, conn: socket.socket) -> None:
        buf = b""
        with conn:
            while True:
                chunk = conn.recv(65536)
                if not chunk:
                    break
                buf += chunk
        records = [decode_measurement(line)
                   for line in buf.decode().splitlines() if line.strip()]
        with self._lock:
            self.measurements.extend(records)

    def _accept_loop(self) -> None:
        for _ in range(self.n_clients):
            conn, _ = self._server.accept()
            t = threading.Thread(target=self._handle, args=(conn,))
            t.start()
            self._threads.append(t)

    def __enter__(self) -> "MeasurementCollector":
        self._accept_thread = threading.Thread(target=self._accept_loop)
        self._accept_thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._accept_thread.join(timeout=10)
        for t in self._threads:
            t.join(timeout=10)
        self._server.close()
