"""Smoke tests for the Python bindings: every exported operation runs end to
end on a small two-exit network."""

import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import elastinet

TINY_ARCH = """
[network]
num_classes=4
in_channels=1
in_size=16

[segment1]
layers=conv out=8 k=3 stride=1 pad=1|relu|conv out=8 k=3 stride=2 pad=1|relu
slot=yes

[segment2]
layers=conv out=16 k=3 stride=2 pad=1|relu
"""


@pytest.fixture(scope="module")
def spec():
    return elastinet.parse_arch_text(TINY_ARCH, "tiny.arch")


@pytest.fixture(scope="module")
def net(spec):
    return elastinet.ElasticNetwork(spec, 3)


@pytest.fixture(scope="module")
def device():
    return elastinet.DeviceProfile()


@pytest.fixture(scope="module")
def tables(net, spec, device):
    return elastinet.PerfTables.build(net, spec, device, [0.62, 0.86])


def test_arch_and_variant_space(spec, net):
    assert spec.num_segments == 2
    assert net.num_segments == 2
    assert net.variant_space_size == 8  # 4 operators x 2 exits
    ids = net.variant_ids()
    assert len(ids) == 8
    assert len(set(ids)) == 8
    assert all("exit=" in v for v in ids)
    assert set(elastinet.operator_names()) == {
        "baseline_conv",
        "depthwise_separable",
        "grouped_shuffle",
        "lowrank_decomposed",
    }


def test_forward_shapes_and_determinism(net):
    rng = np.random.RandomState(7)
    x = rng.uniform(-1.0, 1.0, size=(2, 1, 16, 16)).astype(np.float32)
    a = net.forward(x, 2)
    b = net.forward(x, 2)
    assert a.shape == (2, 4)
    assert a.dtype == np.float32
    np.testing.assert_array_equal(a, b)
    early = net.forward(x, 1)
    assert early.shape == (2, 4)

    with pytest.raises(Exception):
        net.forward(x, 9)


def test_variant_swaps_change_outputs(net):
    rng = np.random.RandomState(11)
    x = rng.uniform(-1.0, 1.0, size=(1, 1, 16, 16)).astype(np.float32)
    ids = net.variant_ids()
    baseline = next(v for v in ids if "slot0=baseline_conv" in v and v.endswith("exit=2"))
    lowrank = next(v for v in ids if "slot0=lowrank_decomposed" in v and v.endswith("exit=2"))

    net.apply_variant(baseline)
    assert net.active_variant_id() == baseline
    base_out = net.forward(x, 2)
    net.apply_variant(lowrank)
    swapped_out = net.forward(x, 2)
    assert not np.array_equal(base_out, swapped_out)

    net.apply_variant(baseline)
    np.testing.assert_array_equal(net.forward(x, 2), base_out)

    with pytest.raises(Exception):
        net.apply_variant("slot0=baseline_conv|exit=99")


def test_forward_adaptive(net):
    rng = np.random.RandomState(13)
    x = rng.uniform(-1.0, 1.0, size=(1, 1, 16, 16)).astype(np.float32)
    logits, exit_taken, confidence = net.forward_adaptive(x, 0.0)
    assert exit_taken == 1  # a zero threshold accepts the first exit
    assert logits.shape == (1, 4)
    assert 0.0 <= confidence <= 1.0
    _, deep_exit, _ = net.forward_adaptive(x, 1.0 + 1e-9)
    assert deep_exit == net.num_segments


def test_dataset_and_eval(net):
    ds = elastinet.make_bars_dataset(64, 5)
    assert len(ds) == 64
    assert ds.images.shape == (64, 1, 16, 16)
    assert len(ds.labels) == 64
    assert set(ds.labels) <= {0, 1, 2, 3}
    acc = net.eval_accuracy(ds, 2)
    assert 0.0 <= acc <= 1.0


def test_predict_costs(net, device):
    ids = sorted(net.variant_ids())
    exit1 = next(v for v in ids if "slot0=baseline_conv" in v and v.endswith("exit=1"))
    exit2 = exit1.replace("exit=1", "exit=2")
    p1 = elastinet.predict(net, exit1, device)
    p2 = elastinet.predict(net, exit2, device)
    for p in (p1, p2):
        assert p["flops"] > 0 and p["params"] > 0 and p["latency_s"] > 0 and p["energy_j"] > 0
        assert p["storage_bytes"] == p["params"] * 4
    assert p2["flops"] > p1["flops"]
    assert p2["latency_s"] > p1["latency_s"]


def test_tables_and_selection(tables, tmp_path):
    assert len(tables) == 8
    rid = tables.rid_of("slot0=baseline_conv|exit=2")
    assert rid is not None
    rec = tables.record(rid)
    assert rec["variant_id"] == "slot0=baseline_conv|exit=2"
    assert rec["accuracy"] == pytest.approx(0.86)

    everything = tables.candidates_within(math.inf, math.inf)
    assert len(everything) == 8

    best = elastinet.select_variant(tables)
    assert best is not None
    assert best["j"] == pytest.approx(0.5 * best["latency_s"] + 0.5 * best["energy_j"])

    none = elastinet.select_variant(tables, acc_min=0.99)
    assert none is None

    deep_only = elastinet.select_variant(tables, exit_filter=2)
    assert deep_only["variant_id"].endswith("exit=2")

    path = tmp_path / "smoke.tables"
    tables.save(str(path))
    reloaded = elastinet.PerfTables.load(str(path))
    assert len(reloaded) == 8
    assert reloaded.record(rid)["latency_s"] == rec["latency_s"]


def test_checkpoint_round_trip(spec, net, tmp_path):
    path = tmp_path / "net.ckpt"
    net.save(str(path))
    other = elastinet.ElasticNetwork(spec, 999)
    other.load(str(path))
    x = np.zeros((1, 1, 16, 16), dtype=np.float32)
    np.testing.assert_array_equal(net.forward(x, 2), other.forward(x, 2))


def test_synth_trace_and_loop(net, tables):
    trace = elastinet.synth_trace("steady", 5.0, 1, lo=0.25)
    assert len(trace) == 50
    assert all(t["u_cpu"] == 0.25 for t in trace)

    result = elastinet.run_loop(net, tables, pattern="steady", duration_s=5.0, seed=1, serve_every=10)
    assert result["switches"] == 0
    assert result["feasibility_violated"] is False
    assert len(result["events"]) == 1
    assert result["events"][0]["trigger"] == "init"
    assert len(result["load_series"]) == 50
    assert result["final_variant"].endswith("exit=2")  # deepest exit preferred


def test_chart_is_valid_xml(tmp_path):
    path = tmp_path / "series.svg"
    xs = [float(i) for i in range(20)]
    ys = [math.sin(i / 3.0) for i in range(20)]
    elastinet.write_chart(str(path), "smoke chart", "sin", xs, ys)
    root = ET.parse(path).getroot()
    # ElementTree folds the xmlns declaration into the tag name.
    assert root.tag == "{http://www.w3.org/2000/svg}svg"
