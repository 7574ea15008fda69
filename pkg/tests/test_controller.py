import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import naive_zero_padded_mean
from pvsmooth.controller import ControllerDriver, SmoothingController
from pvsmooth.frames import MSG_FAULT, MSG_SETPOINT, end_frame, sensor_frame


def test_first_sample_mean_over_zero_buffer():
    # N=4, one 8 W sample against three zero-filled slots
    c = SmoothingController(4)
    out = c.step(8.0, 2.0)
    assert out.p_hat_w == 2.0
    assert out.p_batt_w == 6.0
    assert out.i_set_a == 3.0
    assert not out.fault


def test_constant_input_steady_state():
    c = SmoothingController(4)
    for _ in range(4):
        out = c.step(1000.0, 50.0)
    assert out.p_hat_w == 1000.0
    assert out.p_batt_w == 0.0
    assert out.i_set_a == 0.0
    out = c.step(1000.0, 50.0)
    assert (out.p_hat_w, out.p_batt_w, out.i_set_a) == (1000.0, 0.0, 0.0)


def test_hand_summed_window():
    c = SmoothingController(4)
    for p in (0.0, 4.0, 8.0):
        c.step(p, 1.0)
    out = c.step(4.0, 1.0)
    assert out.p_hat_w == 4.0  # (0+4+8+4)/4
    assert out.p_batt_w == 0.0


def test_ring_buffer_wraps():
    c = SmoothingController(3)
    for p in (3.0, 6.0, 9.0, 12.0):
        out = c.step(p, 1.0)
    # buffer now holds [12, 6, 9]
    assert np.array_equal(np.sort(c.state.p_buf), [6.0, 9.0, 12.0])
    assert out.p_hat_w == 9.0


def test_bad_voltage_is_flagged_zero_current():
    c = SmoothingController(4)
    for v in (0.0, -5.0, float("nan"), float("inf")):
        out = c.step(8.0, v)
        assert out.fault
        assert out.i_set_a == 0.0
    # the PV samples still entered the buffer
    assert c.state.k == 5


def test_non_finite_power_rejected():
    c = SmoothingController(4)
    with pytest.raises(ValueError):
        c.step(float("nan"), 50.0)


def test_window_length_must_be_positive():
    with pytest.raises(ValueError):
        SmoothingController(0)


def test_state_invariants():
    c = SmoothingController(5)
    assert c.state.p_buf.tolist() == [0.0] * 5
    assert c.state.k == 1
    c.step(7.0, 1.0)
    assert c.state.p_buf[0] == 7.0 and c.state.k == 2


# --- properties -----------------------------------------------------------


@given(
    n=st.integers(1, 50),
    values=st.lists(st.floats(0.0, 3000.0), min_size=1, max_size=300),
)
@settings(max_examples=100)
def test_oracle_equivalence(n, values):
    c = SmoothingController(n)
    got = c.smooth_array(np.array(values))
    want = naive_zero_padded_mean(np.array(values), n)
    # scale-aware absolute floor: ~ulp of the rated/window work scale
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12 * 3000.0 / n)


@given(values=st.lists(st.floats(0.0, 1000.0), min_size=2, max_size=200))
@settings(max_examples=100)
def test_step_bound(values):
    n = 8
    c = SmoothingController(n)
    p_hat = c.smooth_array(np.array(values))
    steps = np.abs(np.diff(p_hat))
    assert steps.max() <= 1000.0 / n + 1e-9


@given(values=st.lists(st.floats(0.0, 3000.0), min_size=1, max_size=100))
def test_conservation_bitwise(values):
    c = SmoothingController(16)
    for p in values:
        out = c.step(p, 48.0)
        assert out.p_batt_w == p - out.p_hat_w
        assert out.i_set_a == out.p_batt_w / 48.0


@given(values=st.lists(st.floats(0.0, 3000.0), min_size=1, max_size=30))
def test_warmup_equals_left_fold_mean_bitwise(values):
    # before the buffer wraps, p_hat is the plain running mean of the inputs
    n = 32
    c = SmoothingController(n)
    acc = 0.0
    for p in values:
        out = c.step(p, 50.0)
        acc = acc + p
        assert out.p_hat_w == acc / n


def test_smooth_array_matches_step_bitwise():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 3000.0, 500)
    a = SmoothingController(60).smooth_array(x)
    c = SmoothingController(60)
    b = np.array([c.step(float(p), 50.0).p_hat_w for p in x])
    assert np.array_equal(a, b)


# --- frame-level driver ---------------------------------------------------


def test_driver_answers_every_sensor_frame():
    d = ControllerDriver(n=4)
    for k in range(1, 11):
        reply = d.on_frame(sensor_frame(k, (k - 1) * 5000, 100.0 * k, 50.0))
        assert reply is not None
        assert reply.msg_type == MSG_SETPOINT
        assert reply.seq == k
    assert len(d.rows) == 10
    assert d.error_count == 0


def test_driver_end_frame_stops():
    d = ControllerDriver(n=4)
    assert d.on_frame(end_frame(1, 0)) is None
    assert d.done
    assert d.rows == []


def test_driver_bad_frame_emits_safe_zero():
    d = ControllerDriver(n=4)
    d.on_frame(sensor_frame(1, 0, 100.0, 50.0))
    reply = d.on_bad_frame()
    assert reply.msg_type == MSG_SETPOINT
    assert reply.seq == 2
    assert reply.values == (0.0,)
    assert d.error_count == 1
    assert d.rows[-1].fault
    # the lost sample did not advance the averaging buffer
    assert d.controller.state.k == 2


def test_driver_detects_sequence_gap():
    d = ControllerDriver(n=4)
    d.on_frame(sensor_frame(1, 0, 100.0, 50.0))
    reply = d.on_frame(sensor_frame(3, 10000, 100.0, 50.0))
    assert reply.msg_type == MSG_FAULT
    assert d.done


def test_driver_warmup_flag():
    d = ControllerDriver(n=2)
    for k in range(1, 5):
        d.on_frame(sensor_frame(k, 0, 10.0, 50.0))
    assert [r.warmup for r in d.rows] == [True, True, False, False]


def test_zero_frames_is_clean():
    d = ControllerDriver(n=4)
    d.on_frame(end_frame(1, 0))
    assert d.rows == [] and d.error_count == 0


class ScriptedEndpoint:
    """Plays back a list of frames; 'corrupt' entries raise like a bad wire."""

    def __init__(self, script):
        self.script = list(script)
        self.sent = []

    def recv(self):
        if not self.script:
            raise EOFError
        item = self.script.pop(0)
        if item == "corrupt":
            from pvsmooth.frames import BadCrc

            raise BadCrc("crc mismatch")
        return item

    def send(self, frame):
        self.sent.append(frame)


def test_run_controller_loop_corruption_end_and_eof():
    from pvsmooth.controller import run_controller

    ep = ScriptedEndpoint(
        [
            sensor_frame(1, 0, 100.0, 50.0),
            "corrupt",
            sensor_frame(3, 10000, 300.0, 50.0),
            end_frame(4, 15000),
        ]
    )
    driver = run_controller(ep, n=4)
    assert driver.done
    assert [f.seq for f in ep.sent] == [1, 2, 3]
    assert ep.sent[1].values == (0.0,)  # safe zero for the corrupt frame
    assert driver.error_count == 1
    assert len(driver.rows) == 3 and driver.rows[1].fault


def test_run_controller_transport_close_is_clean():
    from pvsmooth.controller import run_controller

    ep = ScriptedEndpoint([sensor_frame(1, 0, 100.0, 50.0)])  # EOF after one frame
    driver = run_controller(ep, n=4)
    assert not driver.done  # closed, not ended; log flushed as-is
    assert len(driver.rows) == 1 and len(ep.sent) == 1
