import math

import numpy as np
import pytest

from skyframes.ingest import AdsbMessage, Region, validate
from skyframes.projection import project
from skyframes.scenario import (
    HEADING_LSB_DEG,
    NoiseLevels,
    RouteTemplate,
    ScenarioConfig,
    default_templates,
    foreign_route,
    generate_corpus,
    split_corpus,
)


@pytest.fixture(scope="module")
def corpus(region):
    return generate_corpus(region, config=ScenarioConfig(duration_s=600.0), seed=9)


@pytest.fixture(scope="module")
def region():
    return Region(51.47, -0.45)


def test_deterministic(region, corpus):
    assert generate_corpus(region, config=ScenarioConfig(duration_s=600.0), seed=9) == corpus
    assert generate_corpus(region, config=ScenarioConfig(duration_s=600.0), seed=10) != corpus


def test_empty_cases(region):
    assert generate_corpus(region, config=ScenarioConfig(arrival_rate_per_min=0.0)) == []
    assert generate_corpus(region, config=ScenarioConfig(duration_s=0.0)) == []
    with pytest.raises(ValueError):
        generate_corpus(region, templates=[])


def test_messages_valid_and_sorted(corpus):
    assert corpus
    for m in corpus[:2000]:
        validate(m.callsign, m.time_ms, m.latitude, m.longitude, m.speed, m.altitude, m.heading)
        assert 0.0 <= m.heading < 360.0
        assert m.heading / HEADING_LSB_DEG == round(m.heading / HEADING_LSB_DEG)
    keys = [(m.time_ms, m.callsign) for m in corpus]
    assert keys == sorted(keys)


def test_tracks_one_hertz(corpus):
    tracks = {}
    for m in corpus:
        tracks.setdefault(m.callsign, []).append(m.time_ms)
    for times in tracks.values():
        assert np.all(np.diff(times) == 1000)


def test_noiseless_track_on_template(region):
    params = region.projection()
    tp = RouteTemplate((-60_000.0, -10_000.0), (60_000.0, 20_000.0), (30000.0, 30000.0), (400.0, 400.0))
    quiet = ScenarioConfig(arrival_rate_per_min=0.5, duration_s=300.0,
                           noise=NoiseLevels(0.0, 0.0, 0.0, 0.0))
    msgs = generate_corpus(region, [tp], quiet, seed=1)
    assert msgs
    (x0, y0), (x1, y1) = tp.entry, tp.exit
    for m in msgs:
        x, y = project(m.latitude, m.longitude, params)
        cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
        assert abs(cross) / math.hypot(x1 - x0, y1 - y0) < 1e-3
        assert m.altitude == 30000.0 and m.speed == 400.0


def test_template_validation():
    with pytest.raises(ValueError):
        RouteTemplate((0.0, 0.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        RouteTemplate((0.0, 0.0), (1.0, 0.0), altitude_band_ft=(0.0, 50000.0))


def test_default_templates_mix(region):
    tps = default_templates(region)
    assert any(t.descent for t in tps) and any(t.climb for t in tps)
    assert any(not (t.descent or t.climb) for t in tps)


def msg(t):
    return AdsbMessage("A", t * 1000, 51.0, 0.0, 100.0, 1000.0, 0.0)


def test_split_example():
    msgs = [msg(t) for t in range(100)]
    train, val, test = split_corpus(msgs)
    assert [len(train), len(val), len(test)] == [60, 25, 15]
    assert train[-1].time_ms == 59_000 and val[0].time_ms == 60_000 and test[0].time_ms == 85_000


def test_split_degenerate():
    msgs = [msg(t) for t in range(10)]
    assert split_corpus(msgs, (1.0, 0.0, 0.0)) == (msgs, [], [])
    with pytest.raises(ValueError):
        split_corpus(msgs, (0.5, 0.2, 0.2))


def test_split_disjoint_exhaustive(corpus):
    a, b, c = split_corpus(corpus)
    assert len(a) + len(b) + len(c) == len(corpus)
    assert a[-1].time_ms < b[0].time_ms and b[-1].time_ms < c[0].time_ms


def test_foreign_route():
    r = foreign_route(3)
    assert len(r) >= 60 and len({m.callsign for m in r}) == 1
    assert abs(r[0].latitude - 41.8) < 1.0
