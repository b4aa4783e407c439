"""File formats: JSONL streams, JSONL assignments and JSON engine snapshots.

Floats are written with ``repr`` precision (the ``json`` default), so every
value survives a save/load round trip bit for bit.
"""
from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator

import numpy as np

from .core import EngineParams, Partition, SkeletonSet
from .engine import AssignmentEvent, SOCEngine, SplitRecord
from .keys import KeySource
from .streamgen import Stream
from .topology import Topology, TopologyGraph

SNAPSHOT_FORMAT = 1


class DataError(ValueError):
    """Input file content is malformed (maps to exit code 2)."""


# streams

def write_stream(stream: Stream, fh: IO[str]) -> None:
    for x, y in zip(stream.X.tolist(), stream.labels.tolist()):
        fh.write(json.dumps({"x": x, "label": y}) + "\n")


def parse_record(line: str, lineno: int, dim: int | None) -> tuple[np.ndarray, int | None]:
    try:
        rec = json.loads(line)
        x = np.asarray(rec["x"], dtype=np.float64)
        label = rec.get("label")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise DataError(f"line {lineno}: malformed record ({exc})") from None
    if x.ndim != 1 or x.size == 0 or not np.all(np.isfinite(x)):
        raise DataError(f"line {lineno}: 'x' must be a non-empty list of finite numbers")
    if dim is not None and x.size != dim:
        raise DataError(f"line {lineno}: dimension {x.size}, expected {dim}")
    if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
        raise DataError(f"line {lineno}: label must be an integer")
    return x, label


def iter_stream(path) -> Iterator[tuple[np.ndarray, int | None]]:
    """Records of a JSONL stream, validated line by line (blank lines skipped)."""
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            x, label = parse_record(line, lineno, dim)
            dim = x.size
            yield x, label


def read_stream(path) -> Stream:
    xs, labels = [], []
    for x, y in iter_stream(path):
        xs.append(x)
        labels.append(-1 if y is None else y)
    X = np.stack(xs) if xs else np.empty((0, 0))
    return Stream(X, np.asarray(labels, dtype=np.int64))


_DONE = object()


class StreamReader:
    """Parse a stream on a background thread, handing records over a bounded queue.

    Iterating yields ``(x, label)``; a parse error on the reader thread is
    re-raised in the consumer at the position where it occurred.
    """

    def __init__(self, path, maxsize: int = 1024):
        self.path = path
        self._q: queue.Queue = queue.Queue(maxsize)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._work, daemon=True)
        self._thread.start()

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self._q.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _work(self) -> None:
        try:
            for rec in iter_stream(self.path):
                if not self._put(rec):
                    return
        except (DataError, OSError) as exc:
            self._put(exc)
            return
        self._put(_DONE)

    def __iter__(self):
        while True:
            item = self._q.get()
            if item is _DONE:
                return
            if isinstance(item, BaseException):
                raise item
            yield item

    def close(self) -> None:
        self._stop.set()
        self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# assignments

def event_record(ev: AssignmentEvent) -> dict:
    rec = {
        "point_index": ev.point_index,
        "cluster_id": ev.resulting_cluster_id,
        "action": ev.action,
        "absorbed": list(ev.absorbed_cluster_ids),
    }
    if ev.splits:
        # fragment skeletons let an evaluator route members of a split cluster
        rec["splits"] = [
            {
                "source": s.source_cluster_id,
                "fragments": [{"cluster_id": f.cluster_id, "points": f.points.tolist()} for f in s.fragments],
            }
            for s in ev.splits
        ]
    return rec


def format_event(ev: AssignmentEvent) -> str:
    return json.dumps(event_record(ev)) + "\n"


def parse_event(line: str, lineno: int) -> AssignmentEvent:
    try:
        rec = json.loads(line)
        splits = tuple(
            SplitRecord(
                int(s["source"]),
                tuple(
                    SkeletonSet(int(f["cluster_id"]), f["points"], np.zeros(len(f["points"])),
                                np.ones(len(f["points"])), np.arange(len(f["points"])))
                    for f in s["fragments"]
                ),
            )
            for s in rec.get("splits", ())
        )
        return AssignmentEvent(
            int(rec["point_index"]),
            str(rec["action"]),
            int(rec["cluster_id"]),
            tuple(int(c) for c in rec.get("absorbed", ())),
            True,
            splits,
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"assignments line {lineno}: malformed record ({exc})") from None


def read_assignments(path) -> list[AssignmentEvent]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                out.append(parse_event(line, lineno))
    return out


# snapshots

def snapshot_dict(engine: SOCEngine) -> dict:
    P = engine.partition
    clusters = []
    for cid in sorted(P.sets):
        S = P[cid]
        c = {
            "cluster_id": cid,
            "entries": [
                {"coords": p, "key": k, "weight": w, "entry_id": i}
                for p, k, w, i in zip(S.points.tolist(), S.keys.tolist(), S.weights.tolist(), S.ids.tolist())
            ],
        }
        if engine.graphs is not None:
            c["edges"] = sorted([a, b] for a, b in engine.graphs[cid].edges)
        clusters.append(c)
    return {
        "format_version": SNAPSHOT_FORMAT,
        "params": engine.params.to_dict(),
        "dim": engine.dim,
        "stream_position": engine.n_seen,
        "next_cluster_id": P.next_cluster_id,
        "next_entry_id": P.next_entry_id,
        "key_source": engine.source.state(),
        "key_source_digest": engine.source.digest(),
        "dirty": sorted(engine._dirty),
        "clusters": clusters,
    }


def engine_from_snapshot(doc: dict) -> SOCEngine:
    try:
        if doc.get("format_version") != SNAPSHOT_FORMAT:
            raise DataError(f"unsupported snapshot format {doc.get('format_version')!r}")
        params = EngineParams(**doc["params"])
        eng = SOCEngine(params, doc["dim"])
        P = Partition()
        graphs = Topology() if params.split_enabled else None
        for c in doc["clusters"]:
            cid = int(c["cluster_id"])
            ent = c["entries"]
            S = SkeletonSet(
                cid,
                np.array([e["coords"] for e in ent], dtype=np.float64),
                [e["key"] for e in ent],
                [e["weight"] for e in ent],
                [e["entry_id"] for e in ent],
            )
            P.add(S)
            if graphs is not None:
                graphs[cid] = TopologyGraph.from_edges(cid, S.ids, c["edges"])
        P.next_cluster_id = int(doc["next_cluster_id"])
        P.next_entry_id = int(doc["next_entry_id"])
        eng.partition = P
        eng.graphs = graphs
        eng.source = KeySource.from_state(doc["key_source"])
        eng.n_seen = int(doc["stream_position"])
        eng._dirty = set(int(c) for c in doc["dirty"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed snapshot ({exc!r})") from None
    if eng.source.digest() != doc["key_source_digest"]:
        raise DataError("snapshot key-source digest does not match its state")
    return eng


def save_snapshot(engine: SOCEngine, path) -> None:
    Path(path).write_text(json.dumps(snapshot_dict(engine)) + "\n")


def load_snapshot(path) -> SOCEngine:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"snapshot {path} is not valid JSON: {exc}") from None
    return engine_from_snapshot(doc)


@dataclass
class AssignmentWriter:
    """Append assignment lines, flushing every ``flush_every`` records."""

    fh: IO[str]
    flush_every: int = 1000
    count: int = 0

    def write(self, ev: AssignmentEvent) -> None:
        self.fh.write(format_event(ev))
        self.count += 1
        if self.count % self.flush_every == 0:
            self.fh.flush()
