"""Virtual fabric: clock, delay models, determinism, conservation, degradation."""

import random
import statistics

import pytest

from itenet.netsim import (
    ApModel,
    DelayDist,
    ScenarioConfig,
    SimError,
    SimHarness,
    VirtualClock,
    ZERO_DELAY_SCENARIO,
    load_ap_preset,
    load_scenario_preset,
    onboard_run,
    overload_multiplier,
    response_probe,
    run_scenario,
    scenario_for_ap,
)
from itenet.node import NodeState

LOSSY = lambda p: ZERO_DELAY_SCENARIO.with_overrides(loss_probability=p)  # noqa: E731


# -- virtual clock -------------------------------------------------------------


def test_clock_fires_in_time_order_with_stable_ties():
    clock = VirtualClock()
    fired = []
    clock.schedule(30.0, lambda: fired.append("late"))
    clock.schedule(10.0, lambda: fired.append("early"))
    clock.schedule(20.0, lambda: fired.append("tie-first"))
    clock.schedule(20.0, lambda: fired.append("tie-second"))
    clock.run_until_idle()
    assert fired == ["early", "tie-first", "tie-second", "late"]
    assert clock.now() == 30.0


def test_clock_time_is_monotone_and_cancellable():
    clock = VirtualClock()
    seen = []
    handle = clock.schedule(5.0, lambda: seen.append("cancelled"))
    clock.schedule(7.0, lambda: seen.append("kept"))
    handle.cancel()
    assert clock.peek_ms() == 7.0
    clock.run_until_idle()
    assert seen == ["kept"]


def test_clock_nested_scheduling_and_run_for():
    clock = VirtualClock()
    ticks = []

    def tick():
        ticks.append(clock.now())
        if len(ticks) < 10:
            clock.schedule(100.0, tick)

    clock.schedule(100.0, tick)
    clock.run_for(350.0)
    assert ticks == [100.0, 200.0, 300.0]
    assert clock.now() == 350.0  # run_for advances to the horizon
    clock.run_for(1000.0)
    assert len(ticks) == 10


def test_clock_run_until_cap():
    clock = VirtualClock()
    box = []
    clock.schedule(500.0, lambda: box.append(1))
    assert clock.run_until(lambda: bool(box), cap_ms=100.0) is False
    assert clock.now() == 100.0
    assert clock.run_until(lambda: bool(box), cap_ms=1000.0) is True


# -- delay distributions ----------------------------------------------------------


def test_delay_dist_validation():
    with pytest.raises(SimError):
        DelayDist("chi-squared", 1.0)
    with pytest.raises(SimError):
        DelayDist("uniform", -1.0)
    with pytest.raises(SimError):
        DelayDist("normal", 1.0, -0.5)


def test_uniform_samples_stay_in_band():
    dist = DelayDist("uniform", 100.0, 30.0)
    rng = random.Random(42)
    values = [dist.sample(rng) for _ in range(2000)]
    assert all(70.0 <= v <= 130.0 for v in values)
    assert min(values) < 75.0 and max(values) > 125.0  # actually spreads


def test_samples_truncate_at_zero():
    rng = random.Random(7)
    for dist in (DelayDist("normal", 1.0, 50.0), DelayDist("uniform", 1.0, 50.0)):
        values = [dist.sample(rng) for _ in range(2000)]
        assert min(values) == 0.0 or min(values) >= 0.0
        assert all(v >= 0.0 for v in values)


def test_normal_sampling_matches_moments():
    dist = DelayDist("normal", 8000.0, 1500.0)
    rng = random.Random(1)
    small = [dist.sample(rng) for _ in range(20)]
    assert abs(statistics.fmean(small) - 8000.0) <= 2 * 1500.0 / (20 ** 0.5)
    rng = random.Random(1)
    big = [dist.sample(rng) for _ in range(4000)]
    assert abs(statistics.fmean(big) - 8000.0) <= 3 * 1500.0 / (4000 ** 0.5)
    assert abs(statistics.stdev(big) - 1500.0) <= 100.0


def test_delay_dist_round_trip():
    dist = DelayDist("normal", 8000.0, 1500.0)
    assert DelayDist.from_obj(dist.to_obj()) == dist


# -- overload + models -------------------------------------------------------------


def test_overload_multiplier_values():
    assert overload_multiplier(0.0) == 1.0
    assert overload_multiplier(0.5) == 1.0
    assert overload_multiplier(1.0) == 1.0
    assert overload_multiplier(1.2) == pytest.approx(3.0)
    assert overload_multiplier(2.0) == pytest.approx(11.0)
    assert overload_multiplier(1.5, k=2.0) == pytest.approx(2.0)


def test_model_validation_and_round_trips():
    with pytest.raises(SimError):
        ApModel(name="x", load=-0.1)
    with pytest.raises(SimError):
        ScenarioConfig(label="x", ap=ApModel(name="x"), loss_probability=1.5)
    scenario = scenario_for_ap("linksys-like", loss_probability=0.25)
    assert ScenarioConfig.from_obj(scenario.to_obj()) == scenario
    assert ApModel.from_obj(scenario.ap.to_obj()) == scenario.ap


def test_with_overrides_touches_only_named_knobs():
    base = scenario_for_ap("linksys-like")
    lossy = base.with_overrides(loss_probability=0.1)
    assert lossy.loss_probability == 0.1
    assert lossy.ap == base.ap
    loaded = base.with_overrides(load=1.5)
    assert loaded.ap.load == 1.5
    assert loaded.ap.auth_assoc_delay == base.ap.auth_assoc_delay
    assert loaded.loss_probability == base.loss_probability


def test_bundled_presets_load():
    for label in "ABCD":
        scenario = load_scenario_preset(label)
        assert scenario.label == label
        assert 0.0 <= scenario.loss_probability <= 1.0
    for name in ("linksys-like", "smc-like"):
        ap = load_ap_preset(name)
        assert ap.auth_assoc_delay.mean_ms > 0
    with pytest.raises(SimError):
        load_scenario_preset("Z")
    with pytest.raises(SimError):
        load_ap_preset("netgear-like")


# -- onboarding runs -----------------------------------------------------------------


def test_zero_delay_onboarding_is_fast_and_deterministic():
    first = onboard_run(ZERO_DELAY_SCENARIO, seed=7)
    again = onboard_run(ZERO_DELAY_SCENARIO, seed=7)
    assert first.reached_listen
    assert first.total_ms == again.total_ms
    assert first.durations == again.durations
    assert len(first.durations) == 11
    assert first.retry_count == 0
    # zero network delay leaves only node-side pacing: well under two seconds
    assert first.total_ms < 2000.0


def test_scenario_trace_is_seed_deterministic():
    scenario = load_scenario_preset("A")
    one = run_scenario(scenario, node_count=3, seed=7)
    two = run_scenario(scenario, node_count=3, seed=7)
    other = run_scenario(scenario, node_count=3, seed=8)
    assert one.trace.to_jsonl() == two.trace.to_jsonl()
    assert one.node_totals_ms == two.node_totals_ms
    assert one.trace.to_jsonl() != other.trace.to_jsonl()


def test_conservation_across_loss_grid():
    for loss in (0.0, 0.1, 0.5):
        for seed in (0, 1):
            result = run_scenario(
                LOSSY(loss), node_count=4, seed=seed, cap_ms=240_000.0
            )
            assert result.sends == result.delivers + result.drops
            if loss == 0.0:
                assert result.drops == 0


def test_total_loss_means_no_traffic_ever():
    result = run_scenario(LOSSY(1.0), node_count=2, seed=3, cap_ms=30_000.0)
    assert not result.all_listening
    assert result.registered_count == 0
    assert (result.sends, result.delivers, result.drops) == (0, 0, 0)
    lost = [e for e in result.trace.events if e.event == "connect_lost"]
    assert lost  # nodes kept trying against a dead radio
    states = {e.detail["state"] for e in result.trace.events if e.event == "state"}
    assert "listen" not in states
    assert states <= {"init_a", "connect_ap_a"}


def test_fifty_nodes_onboard_without_collisions():
    result = run_scenario(ZERO_DELAY_SCENARIO, node_count=50, seed=5, node_types=[6, 2, 3])
    assert result.all_listening
    assert result.registered_count == 50
    assert result.drops == 0


def test_lossy_onboarding_still_succeeds_with_retries():
    result = onboard_run(LOSSY(0.3), seed=11, cap_ms=600_000.0)
    assert result.reached_listen
    assert result.retry_count > 0


# -- monotone degradation --------------------------------------------------------------


def test_rtt_never_improves_with_loss():
    baseline = None
    for loss in (0.0, 0.05, 0.3):
        scenario = scenario_for_ap("linksys-like", loss_probability=loss)
        probe = response_probe(scenario, requests=150, seed=4)
        rtts = [s.rtt_ms for s in probe.samples]
        if baseline is not None:
            assert all(b <= a + 1e-9 for b, a in zip(baseline, rtts))
            assert statistics.fmean(rtts) >= statistics.fmean(baseline)
        baseline = rtts


def test_rtt_never_improves_with_load():
    baseline = None
    for load in (0.5, 1.2, 2.0):
        scenario = ScenarioConfig(
            label="load-test",
            ap=ApModel(
                name="loaded",
                per_packet_latency=DelayDist("normal", 30.0, 5.0),
                load=load,
            ),
        )
        probe = response_probe(scenario, requests=150, seed=4)
        rtts = [s.rtt_ms for s in probe.samples]
        if baseline is not None:
            assert all(b <= a + 1e-9 for b, a in zip(baseline, rtts))
        baseline = rtts


# -- pacing, bytes, polling ---------------------------------------------------------------


def test_probe_paces_requests_and_reports_bytes():
    probe = response_probe(ZERO_DELAY_SCENARIO, requests=50, gap_ms=25.0, seed=0)
    assert len(probe.samples) == 50
    assert all(s.ok for s in probe.samples)
    starts = [s.start_ms for s in probe.samples]
    gaps = [b - a for a, b in zip(starts, starts[1:])]
    assert all(g >= 25.0 - 1e-9 for g in gaps)
    # one /id exchange: order of magnitude of the reference 712-byte figure
    assert 300 <= probe.exchange_bytes <= 1500
    again = response_probe(ZERO_DELAY_SCENARIO, requests=50, gap_ms=25.0, seed=0)
    assert [s.rtt_ms for s in again.samples] == [s.rtt_ms for s in probe.samples]


def test_failed_probe_requests_cost_the_timeout():
    probe = response_probe(LOSSY(0.5), requests=80, seed=9, timeout_ms=777.0)
    failures = [s for s in probe.samples if not s.ok]
    assert failures
    assert all(s.rtt_ms == 777.0 for s in failures)
    assert all(s.ok == (s.rtt_ms < 777.0) for s in probe.samples)


def test_scenario_polling_collects_samples():
    result = run_scenario(
        ZERO_DELAY_SCENARIO,
        node_count=1,
        seed=2,
        node_types=[2],
        enable_polling=True,
        extra_run_ms=185_000.0,
    )
    assert result.all_listening
    assert result.samples_collected >= 4  # two channels, one refresh per minute
    assert result.samples_collected % 2 == 0
    polls = [e for e in result.trace.events if e.event == "poll"]
    assert sum(e.detail["samples"] for e in polls) == result.samples_collected


def test_sensorless_scenario_collects_nothing():
    result = run_scenario(
        ZERO_DELAY_SCENARIO, node_count=1, seed=2, enable_polling=True, extra_run_ms=120_000.0
    )
    assert result.samples_collected == 0


# -- fault injection ------------------------------------------------------------------


def test_killed_node_times_out_then_revives():
    harness = SimHarness(ZERO_DELAY_SCENARIO, seed=0)
    node = harness.add_node()
    harness.start_node(node)
    assert harness.run_until_listen([node], cap_ms=60_000.0)

    outcomes = []
    node.kill()
    harness.request_node(
        node, "GET", "/id", None, timeout_ms=500.0, label="probe-down",
        on_done=lambda rtt, status, payload: outcomes.append((rtt, status)),
    )
    harness.clock.run_until_idle()
    assert outcomes == [(500.0, None)]

    node.revive()
    harness.request_node(
        node, "GET", "/id", None, timeout_ms=500.0, label="probe-up",
        on_done=lambda rtt, status, payload: outcomes.append((rtt, status)),
    )
    harness.clock.run_until_idle()
    assert outcomes[-1][1] == 200

    # the gateway-side client sees the same availability switch
    node.kill()
    with pytest.raises(SimError):
        harness._node_client(node.ip, 8266, "GET", "/id", None)


def test_trace_event_stream_shape():
    result = run_scenario(ZERO_DELAY_SCENARIO, node_count=1, seed=0)
    lines = result.trace.to_jsonl().strip().splitlines()
    assert lines
    import json as _json

    events = [_json.loads(line) for line in lines]
    assert all(set(e) == {"t_ms", "actor", "event", "detail"} for e in events)
    times = [e["t_ms"] for e in events]
    assert times == sorted(times)
    kinds = {e["event"] for e in events}
    assert {"state", "send", "deliver", "restart"} <= kinds
