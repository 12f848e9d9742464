"""Batch objective adapters and the external evaluator client.

An external evaluator is any executable that reads one JSON request per
line on stdin::

    {"id": 0, "weights": [w1, w2, w3, w4, w5, a1]}

and writes one JSON response per line on stdout, in any order::

    {"id": 0, "objective": 0.93, "valid": true}

Closing stdin signals the end of the run.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import EvaluatorFailure

log = logging.getLogger(__name__)


class FunctionObjective:
    """Wrap ``fn(w) -> value`` or ``fn(w) -> (value, valid)`` as a batch objective.

    Invalid designs always score exactly 0.
    """

    def __init__(self, fn, max_workers=1, name=None):
        self.fn = fn
        self.max_workers = max_workers
        self.name = name or getattr(fn, "__name__", "objective")

    def _one(self, w):
        out = self.fn(np.asarray(w, dtype=float))
        if isinstance(out, tuple):
            value, valid = float(out[0]), bool(out[1])
        else:
            value, valid = float(out), True
        return (value if valid else 0.0), valid

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.max_workers > 1 and len(X) > 1:
            with ThreadPoolExecutor(self.max_workers) as pool:
                return list(pool.map(self._one, X))
        return [self._one(w) for w in X]

    def close(self):
        pass


class ExternalEvaluator:
    """Client for a line-protocol evaluator subprocess.

    The process is started lazily on the first batch and kept for the run.
    Responses are matched by id; ids still unanswered after ``timeout``
    seconds are re-sent once, and if still unanswered (or only answered
    with malformed lines) the design scores ``(0.0, False)``.
    """

    def __init__(self, command, timeout=60.0, env=None, cwd=None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = float(timeout)
        self.env = env
        self.cwd = cwd
        self.name = "external"
        self._proc = None
        self._lines = None
        self._reader = None
        self._next_id = 0
        self._lock = threading.Lock()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def start(self):
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                          text=True, encoding="utf-8", bufsize=1, env=self.env,
                                          cwd=self.cwd)
        except OSError as exc:
            raise EvaluatorFailure(f"cannot start evaluator {self.command!r}: {exc}") from exc
        self._lines = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _send(self, req_id, w):
        msg = json.dumps({"id": req_id, "weights": [float(v) for v in w]})
        try:
            self._proc.stdin.write(msg + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EvaluatorFailure(f"evaluator closed its input: {exc}") from exc

    def _collect(self, pending, results):
        """Read responses until all ``pending`` ids are answered or time runs out."""
        deadline = time.monotonic() + self.timeout
        while pending:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                return
            if line is None:
                raise EvaluatorFailure(
                    f"evaluator exited (code {self._proc.poll()}) with {len(pending)} designs unanswered")
            parsed = _parse_response(line)
            if parsed is None:
                log.warning("malformed evaluator response: %r", line.strip()[:200])
                continue
            rid, value, valid = parsed
            if rid not in pending:
                log.warning("evaluator answered unknown or repeated id %r", rid)
                continue
            pending.discard(rid)
            results[rid] = ((value if valid else 0.0), valid)

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        with self._lock:
            self.start()
            ids = list(range(self._next_id, self._next_id + len(X)))
            self._next_id += len(X)
            by_id = dict(zip(ids, X))
            for rid in ids:
                self._send(rid, by_id[rid])
            pending, results = set(ids), {}
            self._collect(pending, results)
            if pending:
                log.warning("retrying %d unanswered designs: ids %s", len(pending), sorted(pending))
                for rid in sorted(pending):
                    self._send(rid, by_id[rid])
                self._collect(pending, results)
            for rid in sorted(pending):
                log.warning("no valid response for id %d; scoring it invalid", rid)
                results[rid] = (0.0, False)
            return [results[rid] for rid in ids]

    def close(self):
        if self._proc is None:
            return
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        self._proc = None


def _parse_response(line):
    try:
        msg = json.loads(line)
        rid = msg["id"]
        value = float(msg["objective"])
        valid = msg["valid"]
    except (ValueError, KeyError, TypeError):
        return None
    if not isinstance(rid, int) or isinstance(rid, bool) or not isinstance(valid, bool):
        return None
    if not np.isfinite(value):
        return None
    return rid, value, valid


def external_evaluate(batch, binding, timeout=60.0):
    """Evaluate a batch with a one-off evaluator process."""
    with ExternalEvaluator(binding, timeout=timeout) as ev:
        vectors = [w.as_vector() if hasattr(w, "as_vector") else np.asarray(w, dtype=float) for w in batch]
        return ev.evaluate_batch(np.array(vectors))
