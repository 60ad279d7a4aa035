"""Mirror-side traffic anomaly detection.

The monitor consumes capture records — ``(ts_sec, ts_usec, frame_bytes)``
triples, exactly what the fabric's mirror port and the PCAP reader both
produce — extracts per-frame attribute vectors, fits k-means over an
attack-free training prefix, and flags frames whose distance to the
nearest centroid exceeds a threshold.

Feature schemas
---------------
* ``full10`` — frame number, arrival time, inter-arrival delta, TCP
  sequence number, TCP acknowledgement number, TCP window, source IP,
  source port, destination IP, destination port.  Addresses enter as raw
  32-bit integers, which imposes a false ordering on what is really a
  categorical value; the schema is kept as the obvious first cut, and its
  weakness is visible in the reported scores.
* ``subset4`` — frame length, source port, destination port, and the
  Modbus transaction id.  Frames whose payload does not parse as Modbus
  carry ``-1`` in the transaction slot.

Everything here is pure: fitting and scoring never touch the fabric, so
they run equally well against a live mirror stream or a capture file.

A second, much simpler detector (``ewma_baseline``) tracks per-flow packet
rates with an exponentially weighted mean/variance and alerts on rate
spikes.  It exists as the statistical point of comparison: it sees the
flood's onset but is structurally blind to single forged writes that ride
inside an otherwise normal flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import modbus, pcap

FULL10 = "full10"
SUBSET4 = "subset4"

FEATURE_NAMES = {
    FULL10: ("frame_number", "time_us", "delta_us", "tcp_seq", "tcp_ack",
             "tcp_window", "src_ip", "src_port", "dst_ip", "dst_port"),
    SUBSET4: ("frame_len", "src_port", "dst_port", "transaction_id"),
}

DEFAULT_K = 5
DEFAULT_TRAIN_SPLIT = 0.3


# -- feature extraction ------------------------------------------------------------


def extract_features(records, schema: str) -> np.ndarray:
    """One row per capture record, columns per ``FEATURE_NAMES[schema]``.

    ``records`` is an iterable of ``(ts_sec, ts_usec, frame_bytes)``.  The
    first record's inter-arrival delta is 0.
    """
    if schema not in FEATURE_NAMES:
        raise ValueError(f"unknown feature schema {schema!r}")
    rows = []
    prev_us = None
    for number, (ts_sec, ts_usec, frame) in enumerate(records):
        fields = pcap.parse_ethernet_ipv4_tcp(frame)
        if schema == SUBSET4:
            txn = modbus.transaction_id_of(fields.payload)
            rows.append((len(frame), fields.src_port, fields.dst_port,
                         -1 if txn is None else txn))
        else:
            time_us = ts_sec * 1_000_000 + ts_usec
            delta = 0 if prev_us is None else time_us - prev_us
            prev_us = time_us
            rows.append((number, time_us, delta, fields.tcp_seq,
                         fields.tcp_ack, fields.window, fields.src_ip,
                         fields.src_port, fields.dst_ip, fields.dst_port))
    width = len(FEATURE_NAMES[schema])
    return np.array(rows, dtype=np.float64).reshape(len(rows), width)


# -- k-means ------------------------------------------------------------------------


@dataclass(frozen=True)
class KMeansModel:
    """Fitted centroids plus the normalization that produced them."""

    schema: str
    k: int
    seed: int
    mins: np.ndarray            # per-feature raw minimum over training data
    spans: np.ndarray           # per-feature raw range (zero ranges -> 1)
    centroids: np.ndarray       # (k, d), normalized space
    inertia: float              # sum of squared training distances
    inertia_history: tuple      # one entry per Lloyd iteration
    threshold: tuple            # per-cluster alert cut: mean + 3 sigma of
                                # that cluster's training distances, so tight
                                # and loose clusters each get their own band

    def threshold_for(self, vectors: np.ndarray) -> np.ndarray:
        """The default alert cut for each vector's nearest centroid."""
        points = self.normalize(vectors)
        nearest = _squared_distances(points, self.centroids).argmin(axis=1)
        return np.asarray(self.threshold, dtype=np.float64)[nearest]

    def normalize(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if vectors.shape[1] != self.centroids.shape[1]:
            raise ValueError(
                f"expected {self.centroids.shape[1]} features for "
                f"schema {self.schema!r}, got {vectors.shape[1]}")
        return (vectors - self.mins) / self.spans


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances."""
    d2 = (np.einsum("nd,nd->n", points, points)[:, None]
          + np.einsum("kd,kd->k", centroids, centroids)[None, :]
          - 2.0 * points @ centroids.T)
    return np.maximum(d2, 0.0)


def _seed_plusplus(points: np.ndarray, k: int, rng) -> np.ndarray:
    """Spread initial centroids with distance-weighted sampling."""
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            choice = int(rng.integers(n))
        else:
            choice = int(rng.choice(n, p=d2 / total))
        centroids[i] = points[choice]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def kmeans_fit(vectors: np.ndarray, k: int, seed: int = 0,
               max_iter: int = 100, tol: float = 1e-6,
               schema: str = "") -> KMeansModel:
    """Min-max normalize, seed with distance-weighted sampling, run Lloyd
    iterations until the largest centroid shift drops below ``tol``."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError("expected a (n, d) feature matrix")
    n = len(vectors)
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < k:
        raise ValueError(f"{n} vectors cannot fill {k} clusters")

    mins = vectors.min(axis=0)
    spans = vectors.max(axis=0) - mins
    spans = np.where(spans == 0.0, 1.0, spans)
    points = (vectors - mins) / spans

    rng = np.random.default_rng(seed)
    centroids = _seed_plusplus(points, k, rng)
    history = []
    for _ in range(max_iter):
        d2 = _squared_distances(points, centroids)
        nearest = d2.argmin(axis=1)
        per_point = d2[np.arange(n), nearest]
        history.append(float(per_point.sum()))
        updated = centroids.copy()
        for cluster in range(k):
            members = nearest == cluster
            if members.any():
                updated[cluster] = points[members].mean(axis=0)
            else:
                updated[cluster] = points[per_point.argmax()]
        shift = np.abs(updated - centroids).max()
        centroids = updated
        if shift < tol:
            break

    d2 = _squared_distances(points, centroids)
    nearest = d2.argmin(axis=1)
    per_point = d2[np.arange(n), nearest]
    inertia = float(per_point.sum())
    history.append(inertia)
    train_distances = np.sqrt(per_point)
    threshold = []
    for cluster in range(k):
        members = train_distances[nearest == cluster]
        if len(members):
            threshold.append(float(members.mean() + 3.0 * members.std()))
        else:
            threshold.append(0.0)  # nothing trained here: all arrivals alert
    return KMeansModel(schema=schema, k=k, seed=seed, mins=mins, spans=spans,
                       centroids=centroids, inertia=inertia,
                       inertia_history=tuple(history),
                       threshold=tuple(threshold))


def outlier_score(model: KMeansModel, vectors: np.ndarray) -> np.ndarray:
    """Distance from each vector to its nearest centroid, normalized space."""
    points = model.normalize(vectors)
    return np.sqrt(_squared_distances(points, model.centroids).min(axis=1))


@dataclass(frozen=True)
class Alert:
    """One scored frame: the verdict is exactly ``distance > threshold``."""

    ref: int                    # index of the frame in the capture
    schema: str
    distance: float
    threshold: float

    @property
    def verdict(self) -> bool:
        return self.distance > self.threshold


def flag(model: KMeansModel, vector, ref: int = 0,
         threshold: float | None = None) -> Alert:
    """Score one vector against its cluster's (or an explicit) threshold."""
    if threshold is None:
        cut = float(model.threshold_for(vector)[0])
    else:
        cut = threshold
    distance = float(outlier_score(model, vector)[0])
    return Alert(ref=ref, schema=model.schema, distance=distance,
                 threshold=cut)


# -- rate baseline -----------------------------------------------------------------


@dataclass(frozen=True)
class RateAlert:
    """A per-flow packet-rate spike: observed rate against the running
    mean + 3 sigma at that bucket."""

    src_ip: int
    dst_ip: int
    dst_port: int
    bucket: int                 # bucket index from the start of the trace
    rate: int                   # packets from this flow in the bucket
    mean: float
    sigma: float


def ewma_baseline(records, bucket_us: int = 10_000, alpha: float = 0.1,
                  warmup: int = 50, min_rate: int = 5) -> list[RateAlert]:
    """Flag per-flow rate spikes against an exponentially weighted baseline.

    Flows are keyed (src ip, dst ip, dst port); each bucket the flow's
    packet count updates a weighted mean/variance, and a count above
    mean + 3 sigma raises an alert (suppressed during ``warmup`` buckets
    and below ``min_rate`` packets, where the variance estimate is
    meaningless).  Good at spotting a flood switching on; structurally
    blind to a single forged request inside a normal flow.
    """
    counts: dict[tuple, int] = {}
    first_seen: dict[tuple, int] = {}
    last_bucket = 0
    for ts_sec, ts_usec, frame in records:
        fields = pcap.parse_ethernet_ipv4_tcp(frame)
        bucket = (ts_sec * 1_000_000 + ts_usec) // bucket_us
        flow = (fields.src_ip, fields.dst_ip, fields.dst_port)
        counts[(bucket, flow)] = counts.get((bucket, flow), 0) + 1
        if flow not in first_seen or bucket < first_seen[flow]:
            first_seen[flow] = bucket
        last_bucket = max(last_bucket, bucket)

    alerts = []
    stats = {flow: (0.0, 0.0) for flow in first_seen}
    for bucket in range(last_bucket + 1):
        for flow, start in first_seen.items():
            if bucket < start:
                continue
            count = counts.get((bucket, flow), 0)
            mean, var = stats[flow]
            sigma = var ** 0.5
            if (bucket >= warmup and count >= min_rate
                    and count > mean + 3.0 * sigma):
                alerts.append(RateAlert(*flow, bucket=bucket, rate=count,
                                        mean=mean, sigma=sigma))
            delta = count - mean
            mean += alpha * delta
            var = (1.0 - alpha) * (var + alpha * delta * delta)
            stats[flow] = (mean, var)
    return alerts


# -- evaluation ---------------------------------------------------------------------


@dataclass(frozen=True)
class Evaluation:
    """Confusion counts and the usual ratios; ratios that would divide by
    zero are reported as None rather than invented."""

    tp: int
    fp: int
    fn: int
    tn: int
    precision: float | None
    recall: float | None
    f1: float | None

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall,
                "f1": self.f1}


def evaluate(verdicts, labels) -> Evaluation:
    """Standard confusion metrics of alert verdicts against ground truth."""
    verdicts = np.asarray(verdicts, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if verdicts.shape != labels.shape:
        raise ValueError("verdicts and labels must align one-to-one")
    tp = int(np.count_nonzero(verdicts & labels))
    fp = int(np.count_nonzero(verdicts & ~labels))
    fn = int(np.count_nonzero(~verdicts & labels))
    tn = int(np.count_nonzero(~verdicts & ~labels))
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision is None or recall is None or precision + recall == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return Evaluation(tp, fp, fn, tn, precision, recall, f1)


# -- end-to-end detection ------------------------------------------------------------


@dataclass
class DetectionResult:
    """Model plus scores over the part of the trace it did not train on."""

    schema: str
    model: KMeansModel
    train_count: int
    refs: np.ndarray            # capture indices of the scored frames
    distances: np.ndarray
    threshold: tuple | float    # per-cluster defaults, or a scalar override
    verdicts: np.ndarray        # bool, aligned with refs
    alerts: list = field(default_factory=list)   # Alert per flagged frame
    evaluation: Evaluation | None = None

    def report(self, max_alerts: int = 1000) -> dict:
        listed = [{"ref": a.ref, "distance": round(a.distance, 6)}
                  for a in self.alerts[:max_alerts]]
        return {
            "schema": self.schema,
            "k": self.model.k,
            "seed": self.model.seed,
            "threshold": list(self.threshold)
            if isinstance(self.threshold, tuple) else self.threshold,
            "threshold_policy": "per-cluster mean + 3 sigma of training "
                                "distances"
            if isinstance(self.threshold, tuple) else "fixed",
            "normalization": "min-max over the training prefix",
            "train_count": self.train_count,
            "scored_count": int(len(self.refs)),
            "alert_count": int(len(self.alerts)),
            "alerts_listed": len(listed),
            "alerts": listed,
            "evaluation": None if self.evaluation is None
            else self.evaluation.as_dict(),
        }


def run_detection(features: np.ndarray, schema: str, k: int = DEFAULT_K,
                  seed: int = 7, train_split: float = DEFAULT_TRAIN_SPLIT,
                  threshold: float | None = None, labels=None,
                  train_count: int | None = None) -> DetectionResult:
    """Fit on the leading ``train_split`` of the trace, score the rest.

    The training prefix is assumed attack-free; ``labels``, when given,
    must cover the whole trace and are evaluated over the scored suffix.
    ``train_count`` overrides the fractional split with an explicit row
    count — used when the caller splits by capture time instead, so a
    high-rate burst late in the trace cannot drag the boundary into
    itself.
    """
    features = np.asarray(features, dtype=np.float64)
    n = len(features)
    if train_count is None:
        train_count = int(n * train_split)
    if train_count < k:
        raise ValueError(f"training prefix of {train_count} frames cannot "
                         f"fill {k} clusters")
    if train_count >= n:
        raise ValueError("nothing left to score after the training prefix")
    model = kmeans_fit(features[:train_count], k, seed=seed, schema=schema)
    scored = features[train_count:]
    if threshold is None:
        cut = model.threshold
        cuts = model.threshold_for(scored)
    else:
        cut = threshold
        cuts = np.full(len(scored), threshold, dtype=np.float64)
    refs = np.arange(train_count, n)
    distances = outlier_score(model, scored)
    verdicts = distances > cuts
    alerts = [Alert(ref=int(refs[i]), schema=schema,
                    distance=float(distances[i]), threshold=float(cuts[i]))
              for i in np.flatnonzero(verdicts)]
    evaluation = None
    if labels is not None:
        labels = np.asarray(labels, dtype=bool)
        if len(labels) != n:
            raise ValueError("labels must cover every captured frame")
        evaluation = evaluate(verdicts, labels[train_count:])
    return DetectionResult(schema=schema, model=model,
                           train_count=train_count, refs=refs,
                           distances=distances, threshold=cut,
                           verdicts=verdicts, alerts=alerts,
                           evaluation=evaluation)


def pca_projection(features: np.ndarray, model: KMeansModel | None = None
                   ) -> np.ndarray:
    """Project feature rows onto their two largest principal components.

    Used for plotting scored traffic in two dimensions.  When a model is
    given its normalization is reused so training and scored frames share
    one space; otherwise the data normalizes itself.
    """
    features = np.asarray(features, dtype=np.float64)
    if model is not None:
        points = model.normalize(features)
    else:
        mins = features.min(axis=0)
        spans = features.max(axis=0) - mins
        spans = np.where(spans == 0.0, 1.0, spans)
        points = (features - mins) / spans
    centered = points - points.mean(axis=0)
    _, singular, basis = np.linalg.svd(centered, full_matrices=False)
    projected = centered @ basis[:2].T
    if projected.shape[1] < 2:
        projected = np.pad(projected, ((0, 0), (0, 2 - projected.shape[1])))
    return projected


def projection_sample(result: "DetectionResult", features: np.ndarray,
                      cap: int = 1000) -> dict:
    """Plot-ready 2-D view of the scored frames, evenly subsampled.

    The choice of the first two principal components as axes is a
    plotting convention of this package, not part of the detector.
    """
    scored = np.asarray(features, dtype=np.float64)[result.train_count:]
    step = max(1, len(scored) // cap)
    sample = scored[::step]
    verdicts = result.verdicts[::step]
    coords = pca_projection(sample, result.model)
    return {
        "note": "first two principal components of the normalized "
                "features; sampled for plotting",
        "sample_stride": int(step),
        "points": [[round(float(x), 4), round(float(y), 4), bool(v)]
                   for (x, y), v in zip(coords, verdicts)],
    }


# -- brute-force reference (tests and calibration) -----------------------------------


def _canonical_labellings(n: int, k: int) -> np.ndarray:
    """Every assignment of ``n`` points to at most ``k`` clusters, one row
    each, with cluster names in order of first appearance (so the k!
    renamings of a partition appear exactly once)."""
    rows = []

    def grow(prefix, used):
        if len(prefix) == n:
            rows.append(prefix)
            return
        for label in range(min(used + 1, k)):
            grow(prefix + (label,), max(used, label + 1))

    grow((0,), 1)
    return np.array(rows, dtype=np.int8)


def optimal_partition_inertia(vectors: np.ndarray, k: int) -> float:
    """Exhaustive minimum inertia over every assignment of points to at
    most ``k`` clusters, in the same min-max normalized space the fitter
    uses.  Exponential in ``len(vectors)`` — a reference for small cases,
    not a clustering algorithm."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n = len(vectors)
    if n > 14:
        raise ValueError("exhaustive search is for small instances only")
    mins = vectors.min(axis=0)
    spans = vectors.max(axis=0) - mins
    spans = np.where(spans == 0.0, 1.0, spans)
    points = (vectors - mins) / spans

    labellings = _canonical_labellings(n, k)
    # Within-cluster sum of squares, computed for every labelling at once:
    # sum |x|^2 - sum_k |cluster sum|^2 / cluster size.
    total_sq = float((points ** 2).sum())
    inertias = np.full(len(labellings), total_sq)
    for cluster in range(k):
        members = labellings == cluster                   # (A, n)
        counts = members.sum(axis=1)                      # (A,)
        sums = members.astype(np.float64) @ points        # (A, d)
        reduction = (sums ** 2).sum(axis=1)
        nonempty = counts > 0
        inertias[nonempty] -= reduction[nonempty] / counts[nonempty]
    return float(inertias.min())


def best_of_seeds(vectors: np.ndarray, k: int, seeds: int = 256,
                  schema: str = "") -> KMeansModel:
    """Fit once per seed, keep the lowest-inertia model."""
    best = None
    for seed in range(seeds):
        model = kmeans_fit(vectors, k, seed=seed, schema=schema)
        if best is None or model.inertia < best.inertia:
            best = model
    return best
