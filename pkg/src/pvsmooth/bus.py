"""Bus sessions: transports, ADC/DAC quantization, latency, and frame logs.

The plant-side bus boundary is where physics meets the wire:

  * outbound sensor values are quantized (ADC emulation) before encoding,
  * inbound setpoint values are quantized (DAC emulation) after decoding,
  * every frame is logged with its raw bytes plus send/delivery times.

Two transports carry the same bytes: an in-process pump (single thread) and
a loopback TCP socket with the controller serving from another thread. In
lockstep mode, latency and jitter shift recorded timestamps only, so a run
is bitwise reproducible on either transport. Free-running mode is a seeded
discrete-event simulation where delays genuinely decouple delivery from the
plant's sample clock; identical seeds give identical logs. Delivery within
one direction is FIFO: a frame never overtakes an earlier one.
"""

from __future__ import annotations

import heapq
import math
import socket
import threading
from dataclasses import dataclass, field

import numpy as np

from .config import QuantizationConfig, ScenarioConfig
from .controller import ControllerDriver, run_controller
from .frames import (
    HEADER_LEN,
    MSG_SENSOR,
    MSG_SETPOINT,
    BusFrame,
    FrameError,
    decode_frame,
    encode_frame,
    end_frame,
    frame_length,
    sensor_frame,
    setpoint_frame,
)
from .plant import PlantDriver, ProtocolFault
from .series import PowerSeries

S2C = "s2c"  # plant sensor -> controller
C2S = "c2s"  # controller setpoint -> plant


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------


def quantize(value: float, bits: int, full_scale: tuple[float, float]) -> float:
    """Map a physical value through an ideal uniform ADC/DAC pair.

    The value is clamped to [lo, hi], snapped to the nearest of 2**bits
    uniform codes (step = (hi-lo)/2**bits, round half away from zero), and
    mapped back. Idempotent: re-quantizing a code point returns it.
    """
    lo, hi = full_scale
    if not lo < hi:
        raise ValueError(f"full_scale requires lo < hi, got {full_scale}")
    n_codes = 1 << bits
    step = (hi - lo) / n_codes
    v = max(lo, min(hi, value))
    code = math.floor((v - lo) / step + 0.5)
    if code > n_codes - 1:
        code = n_codes - 1
    return lo + code * step


@dataclass(frozen=True)
class ResolvedQuantization:
    """Quantization with all full-scale ranges pinned to concrete values."""

    bits: int
    power_range_w: tuple[float, float]
    voltage_range_v: tuple[float, float]
    current_range_a: tuple[float, float]

    def sensor(self, p_pv_w: float, v_batt_v: float) -> tuple[float, float]:
        return (
            quantize(p_pv_w, self.bits, self.power_range_w),
            quantize(v_batt_v, self.bits, self.voltage_range_v),
        )

    def setpoint(self, i_set_a: float) -> float:
        return quantize(i_set_a, self.bits, self.current_range_a)


def resolve_quantization(
    q: QuantizationConfig | None, cfg: ScenarioConfig, rated_power_w: float
) -> ResolvedQuantization | None:
    """Fill default full-scale ranges from the scenario at hand."""
    if q is None:
        return None
    return ResolvedQuantization(
        bits=q.bits,
        power_range_w=q.power_range_w or (0.0, 2.0 * rated_power_w),
        voltage_range_v=q.voltage_range_v or (0.0, 1.5 * cfg.battery.v_max_v),
        current_range_a=q.current_range_a
        or (-2.0 * cfg.battery.current_limit_a, 2.0 * cfg.battery.current_limit_a),
    )


# ---------------------------------------------------------------------------
# Latency model and session log
# ---------------------------------------------------------------------------


class DelayModel:
    """Seeded per-frame delivery delay: latency +/- uniform jitter.

    Draws are consumed in frame transmission order, so a fixed seed fully
    determines every delivery schedule. All draws are kept for replay checks.
    """

    def __init__(self, latency_ms: float, jitter_ms: float, seed: int):
        self.latency_ms = latency_ms
        self.jitter_ms = jitter_ms
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.draws: list[float] = []

    def next_delay_ms(self) -> float:
        if self.jitter_ms > 0.0:
            draw = float(self._rng.uniform(-self.jitter_ms, self.jitter_ms))
        else:
            draw = 0.0
        self.draws.append(draw)
        return self.latency_ms + draw


@dataclass(frozen=True)
class LoggedFrame:
    direction: str  # S2C or C2S
    seq: int
    msg_type: int
    t_send_ms: float
    t_deliver_ms: float
    data: bytes


@dataclass
class SessionLog:
    frames: list[LoggedFrame] = field(default_factory=list)

    def tagged_bytes(self) -> list[tuple[str, bytes]]:
        return [
            (f"{f.direction} seq={f.seq} send={f.t_send_ms!r} recv={f.t_deliver_ms!r}", f.data)
            for f in self.frames
        ]


class PlantBoundary:
    """Plant-side bus boundary: quantization, codec, delays, frame log.

    corrupt_s2c, when set, mutates outbound sensor bytes after encoding
    (fault injection for integrity tests); it receives the 0-based outbound
    frame index and the encoded bytes.
    """

    def __init__(self, cfg: ScenarioConfig, rated_power_w: float, corrupt_s2c=None):
        t = cfg.transport
        seed = t.seed if t.seed is not None else cfg.seed + 1
        self.delays = DelayModel(t.latency_ms, t.jitter_ms, seed)
        self.quant = resolve_quantization(t.quantization, cfg, rated_power_w)
        self.log = SessionLog()
        self.corrupt_s2c = corrupt_s2c
        self._outbound_count = 0
        self._last_deliver = {S2C: 0.0, C2S: 0.0}

    def _deliver_time(self, direction: str, t_send_ms: float) -> float:
        t = t_send_ms + self.delays.next_delay_ms()
        t = max(t, self._last_deliver[direction])  # FIFO per direction
        self._last_deliver[direction] = t
        return t

    def outbound(self, frame: BusFrame, t_send_ms: float) -> tuple[bytes, float]:
        """Quantize+encode a plant frame; returns (wire bytes, delivery time)."""
        if self.quant is not None and frame.msg_type == MSG_SENSOR:
            frame = sensor_frame(frame.seq, frame.sim_time_ms, *self.quant.sensor(*frame.values))
        data = encode_frame(frame)
        if self.corrupt_s2c is not None:
            data = self.corrupt_s2c(self._outbound_count, data)
        self._outbound_count += 1
        t_deliver = self._deliver_time(S2C, t_send_ms)
        self.log.frames.append(
            LoggedFrame(S2C, frame.seq, frame.msg_type, t_send_ms, t_deliver, data)
        )
        return data, t_deliver

    def inbound(self, data: bytes, t_send_ms: float) -> tuple[BusFrame, float]:
        """Decode+log a controller frame; quantizes setpoint current (DAC)."""
        frame = decode_frame(data)
        t_deliver = self._deliver_time(C2S, t_send_ms)
        self.log.frames.append(
            LoggedFrame(C2S, frame.seq, frame.msg_type, t_send_ms, t_deliver, data)
        )
        if self.quant is not None and frame.msg_type == MSG_SETPOINT:
            frame = setpoint_frame(frame.seq, frame.sim_time_ms, self.quant.setpoint(frame.values[0]))
        return frame, t_deliver


@dataclass
class SessionResult:
    plant: PlantDriver
    controller: ControllerDriver
    log: SessionLog
    delay_draws: list[float]


# ---------------------------------------------------------------------------
# Lockstep sessions
# ---------------------------------------------------------------------------


def run_lockstep_inproc(
    series: PowerSeries, cfg: ScenarioConfig, corrupt_s2c=None
) -> SessionResult:
    """Single-threaded lockstep loop through the full codec path."""
    plant = PlantDriver(series, cfg)
    ctrl = ControllerDriver(cfg.n_window, cfg.sample_period_s)
    boundary = PlantBoundary(cfg, series.rated_power_w, corrupt_s2c=corrupt_s2c)

    frame = plant.first_sensor()
    while True:
        data, t_arrive = boundary.outbound(frame, float(frame.sim_time_ms))
        try:
            reply = ctrl.on_frame(decode_frame(data))
        except FrameError:
            reply = ctrl.on_bad_frame()
        if reply is None:
            break  # END delivered; session complete
        sp, _ = boundary.inbound(encode_frame(reply), t_arrive)
        frame = plant.on_setpoint(sp)
    return SessionResult(plant, ctrl, boundary.log, boundary.delays.draws)


class SocketEndpoint:
    """Blocking frame endpoint over a connected stream socket."""

    def __init__(self, conn: socket.socket):
        self.conn = conn

    def send(self, frame: BusFrame) -> None:
        self.conn.sendall(encode_frame(frame))

    def send_bytes(self, data: bytes) -> None:
        self.conn.sendall(data)

    def _recv_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            chunk = self.conn.recv(n - len(buf))
            if not chunk:
                if buf:
                    raise FrameError(f"connection closed mid-frame ({len(buf)} bytes held)")
                raise EOFError("connection closed")
            buf += chunk
        return buf

    def recv_bytes(self) -> bytes:
        header = self._recv_exact(HEADER_LEN)
        rest = self._recv_exact(frame_length(header) - HEADER_LEN)
        return header + rest

    def recv(self) -> BusFrame:
        return decode_frame(self.recv_bytes())

    def close(self) -> None:
        try:
            self.conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.conn.close()


def lockstep_plant_pump(
    plant: PlantDriver, boundary: PlantBoundary, endpoint: SocketEndpoint
) -> None:
    """Drive the plant side of a lockstep session over a connected socket.

    The controller on the far end may live in another thread or another
    process; the strict sensor/setpoint alternation serializes the loop
    either way, so scheduling cannot influence the numbers.
    """
    frame = plant.first_sensor()
    while True:
        data, t_arrive = boundary.outbound(frame, float(frame.sim_time_ms))
        endpoint.send_bytes(data)
        if frame.msg_type != MSG_SENSOR:
            break  # END or FAULT delivered; no reply expected
        reply_bytes = endpoint.recv_bytes()
        sp, _ = boundary.inbound(reply_bytes, t_arrive)
        try:
            frame = plant.on_setpoint(sp)
        except ProtocolFault:
            endpoint.send(plant.gap_fault())
            raise


def run_lockstep_socket(series: PowerSeries, cfg: ScenarioConfig) -> SessionResult:
    """Lockstep loop over a loopback TCP socket, controller in its own thread."""
    plant = PlantDriver(series, cfg)
    boundary = PlantBoundary(cfg, series.rated_power_w)

    listener = socket.create_server(("127.0.0.1", 0))
    port = listener.getsockname()[1]
    ctrl_box: dict[str, ControllerDriver] = {}

    def serve() -> None:
        with socket.create_connection(("127.0.0.1", port)) as conn:
            ctrl_box["driver"] = run_controller(
                SocketEndpoint(conn), cfg.n_window, cfg.sample_period_s
            )

    thread = threading.Thread(target=serve, daemon=True)
    thread.start()
    conn, _ = listener.accept()
    listener.close()
    plant_end = SocketEndpoint(conn)
    try:
        lockstep_plant_pump(plant, boundary, plant_end)
    finally:
        plant_end.close()
        thread.join(timeout=10.0)
    ctrl = ctrl_box.get("driver")
    if ctrl is None:
        raise ProtocolFault("controller thread did not complete")
    return SessionResult(plant, ctrl, boundary.log, boundary.delays.draws)


# ---------------------------------------------------------------------------
# Free-running session (event-driven, in-process)
# ---------------------------------------------------------------------------

_EV_DELIVER = 0
_EV_TICK = 1


def run_free_running(series: PowerSeries, cfg: ScenarioConfig) -> SessionResult:
    """Seeded discrete-event loop without sensor/setpoint handshaking.

    The plant samples on its own clock and integrates each interval with the
    most recent setpoint delivered by integration time (zero-order hold on
    setpoints). The controller answers every sensor frame immediately on
    delivery. With zero latency this reduces to the lockstep pairing.
    """
    plant = PlantDriver(series, cfg)
    ctrl = ControllerDriver(cfg.n_window, cfg.sample_period_s)
    boundary = PlantBoundary(cfg, series.rated_power_w)
    period_ms = cfg.sample_period_s * 1000.0
    n = plant.n_samples

    events: list[tuple[float, int, int, object]] = []
    counter = 0

    def push(t: float, kind: int, payload: object) -> None:
        nonlocal counter
        heapq.heappush(events, (t, kind, counter, payload))
        counter += 1

    def send_to_controller(frame: BusFrame, t_send: float) -> None:
        data, t_deliver = boundary.outbound(frame, t_send)
        push(t_deliver, _EV_DELIVER, (S2C, data))

    held_setpoint = 0.0
    last_held_seq = 0

    send_to_controller(plant.first_sensor(), 0.0)
    for k in range(1, n + 1):
        push(k * period_ms, _EV_TICK, k)

    while events:
        t_now, kind, _, payload = heapq.heappop(events)
        if kind == _EV_DELIVER:
            direction, content = payload
            if direction == S2C:
                reply = ctrl.on_frame(decode_frame(content))
                if reply is None:
                    continue
                sp, t_deliver = boundary.inbound(encode_frame(reply), t_now)
                push(t_deliver, _EV_DELIVER, (C2S, sp))
            else:
                frame = content
                if frame.msg_type == MSG_SETPOINT and frame.seq > last_held_seq:
                    held_setpoint = frame.values[0]
                    last_held_seq = frame.seq
        else:
            k = payload
            plant.apply_interval(held_setpoint)
            if k < n:
                send_to_controller(
                    sensor_frame(
                        k + 1,
                        plant.sim_time_ms(k),
                        float(series.samples[k]),
                        plant.battery.v_terminal_v,
                    ),
                    t_now,
                )
            else:
                send_to_controller(end_frame(n + 1, plant.sim_time_ms(n)), t_now)
    plant.done = True
    return SessionResult(plant, ctrl, boundary.log, boundary.delays.draws)


def run_session(
    series: PowerSeries, cfg: ScenarioConfig, transport: str = "inproc"
) -> SessionResult:
    """Dispatch to the configured session mode and transport medium."""
    mode = cfg.transport.mode
    if mode == "free_running":
        if transport != "inproc":
            raise ValueError("free_running mode is supported on the in-process transport only")
        return run_free_running(series, cfg)
    if transport == "inproc":
        return run_lockstep_inproc(series, cfg)
    if transport == "socket":
        return run_lockstep_socket(series, cfg)
    raise ValueError(f"unknown transport {transport!r} (expected 'inproc' or 'socket')")
