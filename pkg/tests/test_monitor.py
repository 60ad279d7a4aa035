"""Feature extraction, k-means outlier scoring, rate baseline, evaluation."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otsim import modbus as mb
from otsim import monitor, pcap
from otsim.fabric import ACK, PSH, SYN, Packet, ip_to_int


def wire(payload=b"", src_ip="192.168.1.21", dst_ip="192.168.1.62",
         src_port=49152, dst_port=502, flags=PSH | ACK, seq=100, ack=200,
         window=8192):
    return Packet(src_mac=1, dst_mac=2, src_ip=ip_to_int(src_ip),
                  dst_ip=ip_to_int(dst_ip), ip_id=1, src_port=src_port,
                  dst_port=dst_port, tcp_seq=seq, tcp_ack=ack, flags=flags,
                  window=window, payload=payload, origin="test").to_wire()


def record(tick, frame, subseq=0):
    sec, usec = pcap.tick_timestamp(tick, subseq)
    return (sec, usec, frame)


def modbus_frame(txn=7, unit=1):
    return mb.encode_frame(mb.MbapHeader(txn, unit),
                           mb.ReadCoilsRequest(0, 8))


# -- feature extraction ------------------------------------------------------------


def test_narrow_schema_reads_ports_length_and_transaction_id():
    frame = wire(modbus_frame(txn=7))
    rows = monitor.extract_features([record(3, frame)], monitor.SUBSET4)
    assert rows.shape == (1, 4)
    assert rows[0].tolist() == [len(frame), 49152.0, 502.0, 7.0]


def test_non_modbus_frames_get_the_sentinel_transaction_id():
    syn = wire(flags=SYN)
    flood = wire(payload=bytes(120), flags=SYN)
    rows = monitor.extract_features(
        [record(0, syn), record(1, flood)], monitor.SUBSET4)
    assert rows[:, 3].tolist() == [-1.0, -1.0]
    assert rows[1, 0] == 174.0  # a data-bearing SYN is visibly longer


def test_wide_schema_time_and_interarrival_columns():
    frames = [record(0, wire(), subseq=0),
              record(0, wire(), subseq=40),
              record(25, wire(seq=900))]
    rows = monitor.extract_features(frames, monitor.FULL10)
    assert rows.shape == (3, 10)
    assert rows[:, 0].tolist() == [0.0, 1.0, 2.0]        # frame numbers
    assert rows[:, 1].tolist() == [0.0, 40.0, 250000.0]  # microseconds
    assert rows[:, 2].tolist() == [0.0, 40.0, 249960.0]  # inter-arrival
    assert rows[2, 3] == 900.0
    assert rows[0, 6] == float(ip_to_int("192.168.1.21"))


def test_unknown_schema_is_rejected():
    with pytest.raises(ValueError):
        monitor.extract_features([], "full11")
    assert monitor.extract_features([], monitor.SUBSET4).shape == (0, 4)


# -- k-means fitting -----------------------------------------------------------------


def blobs(rng, centers, per=10, scale=0.3):
    parts = [rng.normal(loc=c, scale=scale, size=(per, len(c)))
             for c in centers]
    return np.vstack(parts)


def test_one_cluster_per_point_reaches_zero_inertia():
    data = np.array([[0.0, 0.0], [5.0, 1.0], [9.0, 4.0]])
    model = monitor.kmeans_fit(data, k=3, seed=0)
    assert model.inertia == pytest.approx(0.0, abs=1e-12)
    assert monitor.outlier_score(model, data).max() < 1e-9


def test_single_cluster_sits_at_the_normalized_mean():
    rng = np.random.default_rng(5)
    data = rng.uniform(0.0, 50.0, size=(40, 3))
    model = monitor.kmeans_fit(data, k=1, seed=3)
    normalized = (data - model.mins) / model.spans
    assert np.allclose(model.centroids[0], normalized.mean(axis=0))


def test_two_separated_blobs_split_cleanly():
    rng = np.random.default_rng(11)
    data = blobs(rng, [(0.0, 0.0), (10.0, 10.0)], per=20)
    model = monitor.kmeans_fit(data, k=2, seed=0)
    points = model.normalize(data)
    nearest = monitor._squared_distances(points, model.centroids).argmin(1)
    assert len(set(nearest[:20].tolist())) == 1
    assert len(set(nearest[20:].tolist())) == 1
    assert nearest[0] != nearest[-1]


def test_too_few_vectors_refuse_to_fit():
    with pytest.raises(ValueError):
        monitor.kmeans_fit(np.zeros((2, 3)), k=3)
    with pytest.raises(ValueError):
        monitor.kmeans_fit(np.zeros((4, 3)), k=0)


def test_fixed_seed_reproduces_the_model_exactly():
    rng = np.random.default_rng(2)
    data = blobs(rng, [(0, 0), (8, 1), (3, 9)], per=12)
    a = monitor.kmeans_fit(data, k=3, seed=42)
    b = monitor.kmeans_fit(data, k=3, seed=42)
    assert np.array_equal(a.centroids, b.centroids)
    assert a.inertia == b.inertia and a.threshold == b.threshold


def test_duplicate_heavy_data_still_fits_finite_centroids():
    data = np.array([[0.0, 0.0]] * 9 + [[1.0, 1.0]] * 3)
    for seed in range(8):
        model = monitor.kmeans_fit(data, k=3, seed=seed)
        assert np.isfinite(model.centroids).all()
        assert model.inertia <= 1e-12  # two distinct values, three clusters


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 16), st.integers(1, 3), st.integers(0, 10_000))
def test_inertia_never_rises_between_iterations(n, k, seed):
    rng = np.random.default_rng(seed)
    data = rng.uniform(-5.0, 5.0, size=(n, 2))
    model = monitor.kmeans_fit(data, k=k, seed=seed)
    history = model.inertia_history
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))
    assert model.inertia == pytest.approx(history[-1])
    assert np.isfinite(model.centroids).all()


def test_restarted_search_matches_the_exhaustive_optimum():
    rng = np.random.default_rng(99)
    for _ in range(3):
        n = int(rng.integers(6, 11))
        k = int(rng.integers(2, 4))
        data = rng.uniform(0.0, 10.0, size=(n, 2))
        best = monitor.best_of_seeds(data, k, seeds=256)
        optimum = monitor.optimal_partition_inertia(data, k)
        assert best.inertia == pytest.approx(optimum, abs=1e-9)


def test_exhaustive_reference_on_a_hand_checkable_case():
    # Two tight pairs at the corners of the unit square after scaling:
    # optimal 2-partition keeps the pairs together.
    data = np.array([[0.0, 0.0], [0.0, 2.0], [10.0, 0.0], [10.0, 2.0]])
    # Normalized: x in {0,1}, y in {0,1}; pairing by x costs 2*(0.5^2)*2.
    assert monitor.optimal_partition_inertia(data, 2) == pytest.approx(1.0)


# -- outlier scoring ----------------------------------------------------------------


def test_training_points_on_centroids_never_alert():
    data = np.array([[0.0, 0.0], [4.0, 4.0]])
    model = monitor.kmeans_fit(data, k=2, seed=0)
    alert = monitor.flag(model, data[0], ref=0)
    assert alert.distance == pytest.approx(0.0, abs=1e-12)
    assert not alert.verdict


def test_distant_point_alerts_and_infinite_threshold_silences():
    rng = np.random.default_rng(4)
    data = blobs(rng, [(0.0, 0.0)], per=30, scale=0.5)
    model = monitor.kmeans_fit(data, k=1, seed=0)
    outlier = np.array([40.0, -35.0])
    assert monitor.flag(model, outlier, ref=1).verdict
    assert not monitor.flag(model, outlier, ref=1,
                            threshold=float("inf")).verdict


def test_width_mismatch_is_an_error():
    model = monitor.kmeans_fit(np.zeros((4, 4)), k=1, schema=monitor.SUBSET4)
    with pytest.raises(ValueError):
        monitor.outlier_score(model, np.zeros((2, 10)))


def test_rescaling_a_raw_feature_leaves_verdicts_unchanged():
    rng = np.random.default_rng(21)
    data = blobs(rng, [(5.0, 5.0), (20.0, 1.0)], per=15)
    probes = rng.uniform(-10.0, 40.0, size=(25, 2))
    base = monitor.kmeans_fit(data, k=2, seed=9)
    scaled = data.copy()
    scaled[:, 1] *= 1000.0
    probes_scaled = probes.copy()
    probes_scaled[:, 1] *= 1000.0
    other = monitor.kmeans_fit(scaled, k=2, seed=9)
    assert np.allclose(monitor.outlier_score(base, probes),
                       monitor.outlier_score(other, probes_scaled))
    assert other.threshold == pytest.approx(base.threshold)


# -- rate baseline ------------------------------------------------------------------


def flow_records(spec):
    """spec: list of (bucket, src, dst, count) -> interleaved records."""
    out = []
    for bucket, src, dst, count in spec:
        for i in range(count):
            out.append(record(bucket, wire(src_ip=src, dst_ip=dst), subseq=i))
    out.sort(key=lambda r: (r[0], r[1]))
    return out


def test_steady_flow_never_alerts_after_warmup():
    spec = [(b, "192.168.1.21", "192.168.1.62", 2) for b in range(120)]
    assert monitor.ewma_baseline(flow_records(spec), warmup=10) == []


def test_rate_spike_alerts_at_onset():
    spec = [(b, "192.168.1.21", "192.168.1.62", 2) for b in range(100)]
    spec += [(b, "192.168.1.66", "192.168.1.62", 50) for b in range(60, 80)]
    alerts = monitor.ewma_baseline(flow_records(spec), warmup=10)
    assert alerts
    assert all(a.src_ip == ip_to_int("192.168.1.66") for a in alerts)
    assert alerts[0].bucket == 60 and alerts[0].rate == 50


def test_single_extra_packet_hides_inside_a_normal_flow():
    spec = [(b, "192.168.1.21", "192.168.1.62", 2) for b in range(100)]
    spec[70] = (70, "192.168.1.21", "192.168.1.62", 3)  # one forged extra
    assert monitor.ewma_baseline(flow_records(spec), warmup=10) == []


# -- evaluation ---------------------------------------------------------------------


def test_perfect_verdicts_score_ones():
    ev = monitor.evaluate([True, False, True], [True, False, True])
    assert (ev.precision, ev.recall, ev.f1) == (1.0, 1.0, 1.0)
    assert (ev.tp, ev.fp, ev.fn, ev.tn) == (2, 0, 0, 1)


def test_silence_on_a_positive_trace_scores_zero_recall():
    ev = monitor.evaluate([False, False], [True, False])
    assert ev.recall == 0.0
    assert ev.precision is None and ev.f1 is None


def test_one_of_each_confusion_cell():
    ev = monitor.evaluate([True, True, False, False],
                          [True, False, True, False])
    assert (ev.tp, ev.fp, ev.fn, ev.tn) == (1, 1, 1, 1)
    assert ev.precision == 0.5 and ev.recall == 0.5
    assert ev.f1 == pytest.approx(0.5)


def test_misaligned_labels_are_rejected():
    with pytest.raises(ValueError):
        monitor.evaluate([True], [True, False])


# -- end-to-end detection ------------------------------------------------------------


def synthetic_trace():
    """300 steady Modbus polls, then a 40-frame burst of odd-ported,
    payloadless SYNs three quarters of the way in."""
    records, labels = [], []
    rng = np.random.default_rng(8)
    for i in range(300):
        frame = wire(modbus_frame(txn=i % 50), src_port=49152 + (i % 4))
        records.append(record(i, frame))
        labels.append(False)
    for i in range(40):
        frame = wire(payload=bytes(120), flags=SYN,
                     src_ip="192.168.1.66",
                     src_port=int(rng.integers(1024, 65535)))
        records.append(record(230 + i, frame, subseq=5))
        labels.append(True)
    order = sorted(range(len(records)), key=lambda j: records[j][:2])
    return ([records[j] for j in order],
            np.array([labels[j] for j in order]))


def test_detection_pipeline_flags_the_burst():
    records, labels = synthetic_trace()
    features = monitor.extract_features(records, monitor.SUBSET4)
    result = monitor.run_detection(features, monitor.SUBSET4, k=3, seed=7,
                                   labels=labels)
    assert result.train_count == 102
    assert result.evaluation.recall == 1.0
    assert result.evaluation.precision == 1.0
    assert all(a.verdict for a in result.alerts)
    assert {a.ref for a in result.alerts} == \
        set(np.flatnonzero(labels).tolist())

    report = result.report(max_alerts=10)
    assert report["alert_count"] == 40 and report["alerts_listed"] == 10
    assert report["evaluation"]["tp"] == 40
    assert report["schema"] == monitor.SUBSET4


def test_detection_rejects_bad_splits_and_short_labels():
    features = np.zeros((20, 4))
    with pytest.raises(ValueError):
        monitor.run_detection(features, monitor.SUBSET4, k=5,
                              train_split=0.1)
    with pytest.raises(ValueError):
        monitor.run_detection(features, monitor.SUBSET4, k=2,
                              labels=np.zeros(3, dtype=bool))
    with pytest.raises(ValueError):
        monitor.run_detection(features, monitor.SUBSET4, k=2,
                              train_split=1.0)


def test_projection_gives_two_finite_components():
    records, _ = synthetic_trace()
    features = monitor.extract_features(records, monitor.SUBSET4)
    flat = monitor.pca_projection(features)
    assert flat.shape == (len(features), 2)
    assert np.isfinite(flat).all()
    model = monitor.kmeans_fit(features[:100], k=3, schema=monitor.SUBSET4)
    via_model = monitor.pca_projection(features, model)
    assert via_model.shape == (len(features), 2)


def test_capture_file_round_trip_feeds_extraction():
    records, _ = synthetic_trace()
    sink = io.BytesIO()
    pcap.write_pcap(records, sink)
    sink.seek(0)
    again = pcap.read_pcap(sink)
    a = monitor.extract_features(records, monitor.FULL10)
    b = monitor.extract_features(again, monitor.FULL10)
    assert np.array_equal(a, b)
