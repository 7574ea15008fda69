import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ideal_battery
from pvsmooth.bus import (
    C2S,
    S2C,
    quantize,
    resolve_quantization,
    run_free_running,
    run_lockstep_inproc,
    run_lockstep_socket,
    run_session,
)
from pvsmooth.config import (
    QuantizationConfig,
    ScenarioConfig,
    TransportConfig,
    validate_scenario,
)
from pvsmooth.controller import SmoothingController
from pvsmooth.frames import MSG_END, MSG_SENSOR, MSG_SETPOINT
from pvsmooth.plant import PlantDriver
from pvsmooth.series import PowerSeries
from pvsmooth.synth import synth_pv


# --- quantization ----------------------------------------------------------


def test_quantize_12bit_step_of_one():
    # 2**12 codes over [0, 4096]: step is exactly 1.0
    assert quantize(1000.3, 12, (0.0, 4096.0)) == 1000.0
    assert quantize(1000.5, 12, (0.0, 4096.0)) == 1001.0  # ties away from zero
    assert quantize(1000.7, 12, (0.0, 4096.0)) == 1001.0


def test_quantize_endpoints():
    assert quantize(0.0, 12, (0.0, 4096.0)) == 0.0
    assert quantize(-50.0, 12, (0.0, 4096.0)) == 0.0  # clamped to lo
    # hi clamps to the top code, one step below hi
    assert quantize(4096.0, 12, (0.0, 4096.0)) == 4095.0
    assert quantize(1e9, 12, (0.0, 4096.0)) == 4095.0


def test_quantize_rejects_bad_range():
    with pytest.raises(ValueError):
        quantize(1.0, 12, (5.0, 5.0))


@given(
    v=st.floats(-100.0, 100.0),
    bits=st.integers(8, 16),
    lo=st.floats(-50.0, 0.0),
    span=st.floats(1.0, 200.0),
)
@settings(max_examples=150)
def test_quantize_idempotent_and_bounded(v, bits, lo, span):
    fs = (lo, lo + span)
    q = quantize(v, bits, fs)
    assert quantize(q, bits, fs) == q
    assert fs[0] <= q <= fs[1]
    step = span / 2**bits
    if fs[0] <= v <= fs[1]:
        if v > fs[1] - step / 2:
            # the converter saturates at the top code, one step below hi
            assert abs(q - v) <= step + 1e-12 * span
        else:
            assert abs(q - v) <= step / 2 + 1e-12 * span


def test_resolved_default_ranges(default_cfg):
    r = resolve_quantization(QuantizationConfig(), default_cfg, 3000.0)
    assert r.power_range_w == (0.0, 6000.0)
    assert r.voltage_range_v == (0.0, 1.5 * 58.0)
    assert r.current_range_a == (-110.0, 110.0)
    assert resolve_quantization(None, default_cfg, 3000.0) is None


# --- lockstep sessions -----------------------------------------------------


def three_sample_cfg():
    return validate_scenario(ScenarioConfig(window_s=10.0))


def test_lockstep_alternation_log():
    series = PowerSeries([10.0, 20.0, 30.0], 5.0, 100.0)
    result = run_lockstep_inproc(series, three_sample_cfg())
    kinds = [(f.direction, f.msg_type) for f in result.log.frames]
    assert kinds == [
        (S2C, MSG_SENSOR),
        (C2S, MSG_SETPOINT),
        (S2C, MSG_SENSOR),
        (C2S, MSG_SETPOINT),
        (S2C, MSG_SENSOR),
        (C2S, MSG_SETPOINT),
        (S2C, MSG_END),
    ]
    assert [f.seq for f in result.log.frames] == [1, 1, 2, 2, 3, 3, 4]


def test_sensor_and_setpoint_counts_match():
    series = synth_pv("cloud_square", 1800, 5, 1000.0)
    result = run_lockstep_inproc(series, validate_scenario(ScenarioConfig()))
    sensors = [f for f in result.log.frames if f.msg_type == MSG_SENSOR]
    setpoints = [f for f in result.log.frames if f.msg_type == MSG_SETPOINT]
    assert len(sensors) == len(setpoints) == 360
    assert [f.seq for f in sensors] == [f.seq for f in setpoints]


def test_same_config_reruns_identically():
    series = synth_pv("cloud_random", 600, 5, 1000.0, seed=11)
    cfg = validate_scenario(
        ScenarioConfig(transport=TransportConfig(latency_ms=20.0, jitter_ms=5.0))
    )
    a = run_lockstep_inproc(series, cfg)
    b = run_lockstep_inproc(series, cfg)
    assert a.log.tagged_bytes() == b.log.tagged_bytes()


def test_socket_matches_inproc_bitwise():
    series = synth_pv("cloud_random", 900, 5, 3000.0, seed=3)
    cfg = validate_scenario(ScenarioConfig())
    a = run_lockstep_inproc(series, cfg)
    b = run_lockstep_socket(series, cfg)
    assert a.log.tagged_bytes() == b.log.tagged_bytes()
    assert [(r.k, r.p_hat_w, r.i_set_a) for r in a.controller.rows] == [
        (r.k, r.p_hat_w, r.i_set_a) for r in b.controller.rows
    ]
    assert [(r.k, r.soc, r.p_grid_w) for r in a.plant.rows] == [
        (r.k, r.soc, r.p_grid_w) for r in b.plant.rows
    ]


def test_controller_in_separate_process_matches_inproc(tmp_path):
    # the wire format is the whole contract: a controller hosted in another
    # interpreter produces byte-identical traffic and an identical step log
    import socket
    import subprocess
    import sys

    from pvsmooth.bus import PlantBoundary, SocketEndpoint, lockstep_plant_pump
    from pvsmooth.run import write_controller_log

    series = synth_pv("cloud_random", 600, 5, 3000.0, seed=17)
    cfg = validate_scenario(ScenarioConfig(window_s=60.0, seed=17))
    inproc = run_lockstep_inproc(series, cfg)
    log_inproc = tmp_path / "ctrl_inproc.csv"
    write_controller_log(inproc.controller.rows, log_inproc)

    listener = socket.create_server(("127.0.0.1", 0))
    port = listener.getsockname()[1]
    log_remote = tmp_path / "ctrl_remote.csv"
    script = (
        "import socket, sys\n"
        "from pvsmooth.bus import SocketEndpoint\n"
        "from pvsmooth.controller import run_controller\n"
        "from pvsmooth.run import write_controller_log\n"
        f"conn = socket.create_connection(('127.0.0.1', {port}))\n"
        f"driver = run_controller(SocketEndpoint(conn), n={cfg.n_window}, t_s={cfg.sample_period_s})\n"
        f"write_controller_log(driver.rows, r'{log_remote}')\n"
    )
    proc = subprocess.Popen([sys.executable, "-c", script])
    try:
        conn, _ = listener.accept()
        listener.close()
        plant = PlantDriver(series, cfg)
        boundary = PlantBoundary(cfg, series.rated_power_w)
        endpoint = SocketEndpoint(conn)
        lockstep_plant_pump(plant, boundary, endpoint)
        endpoint.close()
        assert proc.wait(timeout=30) == 0
    finally:
        if proc.poll() is None:
            proc.kill()

    assert boundary.log.tagged_bytes() == inproc.log.tagged_bytes()
    assert [(r.k, r.soc, r.p_grid_w) for r in plant.rows] == [
        (r.k, r.soc, r.p_grid_w) for r in inproc.plant.rows
    ]
    assert log_remote.read_bytes() == log_inproc.read_bytes()


def test_lockstep_latency_shifts_timestamps_only():
    series = PowerSeries([10.0, 20.0, 30.0], 5.0, 100.0)
    cfg0 = three_sample_cfg()
    cfg1 = validate_scenario(
        replace(cfg0, transport=TransportConfig(latency_ms=250.0, jitter_ms=100.0, seed=4))
    )
    a = run_lockstep_inproc(series, cfg0)
    b = run_lockstep_inproc(series, cfg1)
    # identical bytes in identical order, different recorded delivery times
    assert [f.data for f in a.log.frames] == [f.data for f in b.log.frames]
    assert all(f.t_deliver_ms == f.t_send_ms for f in a.log.frames)
    assert all(f.t_deliver_ms >= f.t_send_ms + 150.0 for f in b.log.frames)


def test_loop_equals_direct_function_composition():
    # zero latency, no quantization: the bus must not change any number
    series = synth_pv("cloud_square", 600, 5, 1000.0)
    cfg = validate_scenario(ScenarioConfig(window_s=60.0, battery=ideal_battery()))
    result = run_lockstep_inproc(series, cfg)

    ctrl = SmoothingController(cfg.n_window)
    plant = PlantDriver(series, cfg)
    v = plant.battery.v_terminal_v
    for k in range(len(series)):
        out = ctrl.step(float(series.samples[k]), v)
        plant.apply_interval(out.i_set_a)
        v = plant.battery.v_terminal_v
        row = result.controller.rows[k]
        assert row.p_hat_w == out.p_hat_w
        assert row.i_set_a == out.i_set_a
    assert [r.soc for r in plant.rows] == [r.soc for r in result.plant.rows]
    assert [r.p_grid_w for r in plant.rows] == [r.p_grid_w for r in result.plant.rows]


def test_corrupted_frame_mid_run_recovers():
    series = PowerSeries([10.0, 20.0, 30.0, 40.0], 5.0, 100.0)
    cfg = validate_scenario(ScenarioConfig(window_s=10.0))

    def flip_bit(idx: int, data: bytes) -> bytes:
        if idx == 1:  # corrupt the second sensor frame
            out = bytearray(data)
            out[25] ^= 0x10
            return bytes(out)
        return data

    result = run_lockstep_inproc(series, cfg, corrupt_s2c=flip_bit)
    assert result.controller.error_count == 1
    fault_rows = [r for r in result.controller.rows if r.fault]
    assert len(fault_rows) == 1
    assert fault_rows[0].i_set_a == 0.0
    # loop survived to completion
    assert result.plant.done
    assert len(result.plant.rows) == 4


def test_quantization_applies_on_the_wire():
    series = PowerSeries([1000.3, 1000.3, 1000.3], 5.0, 2048.0)
    q = QuantizationConfig(bits=12, power_range_w=(0.0, 4096.0), voltage_range_v=(0.0, 64.0),
                           current_range_a=(-64.0, 64.0))
    cfg = validate_scenario(
        ScenarioConfig(window_s=10.0, battery=ideal_battery(),
                       transport=TransportConfig(quantization=q))
    )
    result = run_lockstep_inproc(series, cfg)
    # the controller saw the quantized power, not the raw one
    assert all(r.p_pv_w == 1000.0 for r in result.controller.rows)
    # and the plant saw quantized setpoints: multiples of 128/4096 A
    step = 128.0 / 4096.0
    for r in result.plant.rows:
        assert abs(r.i_request_a / step - round(r.i_request_a / step)) < 1e-9


# --- free-running ---------------------------------------------------------


def freerun_cfg(latency=100.0, jitter=50.0, seed=9):
    return validate_scenario(
        ScenarioConfig(
            transport=TransportConfig(
                mode="free_running", latency_ms=latency, jitter_ms=jitter, seed=seed
            )
        )
    )


def test_free_running_same_seed_identical_logs():
    series = synth_pv("cloud_random", 900, 5, 3000.0, seed=5)
    a = run_free_running(series, freerun_cfg())
    b = run_free_running(series, freerun_cfg())
    assert a.log.tagged_bytes() == b.log.tagged_bytes()
    assert a.delay_draws == b.delay_draws


def test_free_running_different_seed_differs():
    series = synth_pv("cloud_random", 900, 5, 3000.0, seed=5)
    a = run_free_running(series, freerun_cfg(seed=9))
    b = run_free_running(series, freerun_cfg(seed=10))
    assert a.log.tagged_bytes() != b.log.tagged_bytes()


def test_free_running_delivery_times_replay_from_draws():
    series = synth_pv("cloud_random", 600, 5, 3000.0, seed=5)
    result = run_free_running(series, freerun_cfg(latency=100.0, jitter=50.0))
    last = {S2C: 0.0, C2S: 0.0}
    for frame, draw in zip(result.log.frames, result.delay_draws, strict=True):
        t = max(frame.t_send_ms + 100.0 + draw, last[frame.direction])
        last[frame.direction] = t
        assert t == frame.t_deliver_ms
        assert abs(draw) <= 50.0


def test_free_running_zero_latency_matches_lockstep():
    series = synth_pv("cloud_random", 900, 5, 3000.0, seed=6)
    lock = run_lockstep_inproc(series, validate_scenario(ScenarioConfig()))
    free = run_free_running(series, freerun_cfg(latency=0.0, jitter=0.0))
    assert [(r.k, r.soc, r.p_grid_w) for r in free.plant.rows] == [
        (r.k, r.soc, r.p_grid_w) for r in lock.plant.rows
    ]


def test_free_running_latency_holds_stale_setpoints():
    # 10 s each way: setpoint 1 (sent on sensor-1 delivery at t=10 s) lands at
    # t=20 s, exactly the start of interval 4; earlier intervals run at 0 A
    series = PowerSeries([100.0, 200.0, 300.0, 400.0], 5.0, 1000.0)
    cfg = validate_scenario(
        ScenarioConfig(
            window_s=10.0,
            transport=TransportConfig(mode="free_running", latency_ms=10000.0, jitter_ms=0.0, seed=1),
        )
    )
    result = run_free_running(series, cfg)
    i_set_1 = result.controller.rows[0].i_set_a
    assert i_set_1 == (100.0 - 50.0) / 53.0
    assert [r.i_request_a for r in result.plant.rows] == [0.0, 0.0, 0.0, i_set_1]
    assert len(result.controller.rows) == 4


def test_free_running_requires_inproc():
    series = PowerSeries([1.0, 2.0, 3.0], 5.0, 10.0)
    cfg = freerun_cfg()
    with pytest.raises(ValueError, match="in-process"):
        run_session(series, cfg, transport="socket")
