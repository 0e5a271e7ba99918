"""Channel value rules: quantization, profiles, and actuator write validation."""

import pytest
from hypothesis import given, settings, strategies as st

from itenet.ite import ChannelKind, DataType, FieldDescriptor
from itenet.transducers import (
    ActuatorState,
    SensorProfile,
    bind_channels,
    default_profile,
    is_aligned,
    iter_fixture_ites,
    load_fixture_ite,
    quantize,
)

TEMP_FD = FieldDescriptor("Temperature", "Celsius", DataType.FLOAT, -40.0, 80.0, 0.1)
DIMMER_FD = FieldDescriptor("ActuatorValue", "%", DataType.UNSIGNED_INT, 0.0, 100.0, 1.0)
BOOL_FD = FieldDescriptor("ActuatorValue", "-", DataType.BOOLEAN, 0.0, 1.0, 1.0)


# -- grid arithmetic ---------------------------------------------------------


def test_is_aligned():
    assert is_aligned(20.1, -40.0, 0.1)
    assert is_aligned(-40.0, -40.0, 0.1)
    assert not is_aligned(20.15, -40.0, 0.1)
    assert is_aligned(3.7, 0.0, 0.0)  # resolution 0 means continuous


def test_quantize_clamps_and_snaps():
    assert quantize(-100.0, TEMP_FD) == -40.0
    assert quantize(999.0, TEMP_FD) == 80.0
    assert quantize(20.16, TEMP_FD) == 20.2
    assert isinstance(quantize(3.0, DIMMER_FD), int)
    assert quantize(3.4, DIMMER_FD) == 3


def test_quantize_emits_clean_floats():
    # 202 * 0.1 is 20.200000000000003 in bare float arithmetic
    assert repr(quantize(20.2, TEMP_FD)) == "20.2"
    assert repr(quantize(20.200000000000003, TEMP_FD)) == "20.2"


@given(st.floats(-1e6, 1e6))
def test_quantize_always_lands_in_bounds_on_grid(x):
    q = quantize(x, TEMP_FD)
    assert TEMP_FD.min_value <= q <= TEMP_FD.max_value
    assert is_aligned(q, TEMP_FD.min_value, TEMP_FD.resolution)


# -- sensor profiles ---------------------------------------------------------


@pytest.mark.parametrize(
    "profile",
    [
        SensorProfile("constant", TEMP_FD, value=22.5),
        SensorProfile("sinusoid", TEMP_FD, period=60),
        SensorProfile("random-walk", TEMP_FD, value=20.0, step=0.1, seed=7),
        SensorProfile("random-walk", BOOL_FD, value=0.0, step=1.0, seed=7),
    ],
    ids=["constant", "sinusoid", "walk", "bool-walk"],
)
def test_profiles_stay_in_bounds_and_aligned_for_10000_ticks(profile):
    fd = profile.fd
    for tick in range(10_000):
        v = profile.sample(tick)
        assert fd.min_value <= v <= fd.max_value
        assert is_aligned(float(v), fd.min_value, fd.resolution)


def test_sinusoid_attains_both_extremes():
    profile = SensorProfile("sinusoid", DIMMER_FD, period=4)
    values = {profile.sample(t) for t in range(4)}
    assert DIMMER_FD.min_value in values
    assert DIMMER_FD.max_value in values


def test_constant_profile_is_quantized():
    profile = SensorProfile("constant", TEMP_FD, value=20.16)
    assert profile.sample(0) == 20.2


def test_walk_is_deterministic_per_seed():
    a = SensorProfile("random-walk", TEMP_FD, value=20.0, step=0.1, seed=3)
    b = SensorProfile("random-walk", TEMP_FD, value=20.0, step=0.1, seed=3)
    c = SensorProfile("random-walk", TEMP_FD, value=20.0, step=0.1, seed=4)
    seq_a = [a.sample(t) for t in range(200)]
    seq_b = [b.sample(t) for t in range(200)]
    seq_c = [c.sample(t) for t in range(200)]
    assert seq_a == seq_b
    assert seq_a != seq_c


def test_unknown_generator_rejected():
    with pytest.raises(ValueError):
        SensorProfile("noise", TEMP_FD)


# -- actuator writes ---------------------------------------------------------


def test_actuator_defaults_to_quantized_minimum():
    assert ActuatorState(DIMMER_FD).current == 0
    assert ActuatorState(BOOL_FD).current == 0
    assert ActuatorState(TEMP_FD).current == -40.0


def test_actuator_accepts_valid_and_rejects_invalid():
    state = ActuatorState(DIMMER_FD)
    assert state.apply(20) is True
    assert state.current == 20
    # every rejection leaves the value untouched
    for bad in (-1, 101, 20.5, "20", None, True, [20], {"v": 20}):
        assert state.apply(bad) is False, bad
        assert state.current == 20


def test_actuator_exhaustive_over_small_integer_range():
    # for an integer field spanning <= 1000 values, check every write in a
    # widened window: exactly the in-range integers are accepted
    state = ActuatorState(DIMMER_FD)
    for value in range(-200, 301):
        expected = 0 <= value <= 100
        assert state.apply(value) is expected, value
        if not expected:
            assert 0 <= state.current <= 100


def test_boolean_actuator_accepts_bool_and_binary_int_only():
    state = ActuatorState(BOOL_FD)
    assert state.apply(True) is True
    assert state.current == 1
    assert state.apply(0) is True
    assert state.current == 0
    for bad in (2, -1, 0.0, 1.0, "1", None):
        assert state.apply(bad) is False, bad
        assert state.current == 0


def test_float_actuator_respects_resolution_grid():
    state = ActuatorState(TEMP_FD)
    assert state.apply(20.1) is True
    assert state.apply(20.15) is False  # off the 0.1 grid
    assert state.current == 20.1


@given(st.floats(-500, 500), st.integers(-500, 500))
@settings(max_examples=500)
def test_actuator_never_holds_out_of_bounds_value(f, i):
    state = ActuatorState(DIMMER_FD)
    state.apply(f)
    state.apply(i)
    assert 0 <= state.current <= 100
    assert isinstance(state.current, int)


# -- binding to fixture descriptors ------------------------------------------


def test_bind_channels_matches_descriptor_shape():
    for ite in iter_fixture_ites():
        sensors, actuators = bind_channels(ite, seed=1)
        assert len(sensors) == len(ite.sensors)
        assert len(actuators) == len(ite.actuators)
        for ch in sensors:
            v = ch.read()
            fd = ch.descriptor.response_format
            assert fd.min_value <= v <= fd.max_value


def test_bind_channels_deterministic_by_seed():
    ite = load_fixture_ite(2, 1)
    a, _ = bind_channels(ite, seed=5)
    b, _ = bind_channels(ite, seed=5)
    assert [a[0].read() for _ in range(50)] == [b[0].read() for _ in range(50)]


def test_default_profile_kinds():
    ite = load_fixture_ite(2, 1)
    profile = default_profile(ite.sensors[0], seed=0)
    assert profile.generator == "random-walk"
    assert profile.fd is ite.sensors[0].response_format


def test_fixture_channel_kinds_are_consistent():
    for ite in iter_fixture_ites():
        for ch in ite.sensors:
            assert ch.kind is ChannelKind.SENSOR
            assert ch.request_format is None
        for ch in ite.actuators:
            assert ch.kind is ChannelKind.ACTUATOR
            assert ch.request_format is not None
