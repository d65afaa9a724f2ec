"""Query-budgeted prediction oracle: the MLaaS boundary around the victim.

The attacker only ever holds an OracleHandle (or a RemoteOracle speaking the
newline-delimited JSON protocol); neither exposes victim parameters.
"""

import json
import socket
import socketserver
import threading
from dataclasses import dataclass

import numpy as np

from . import models
from .errors import BudgetExceededError, ShapeError

MODES = ("probability_vector", "hard_label")


class QueryLedger:
    """Thread-safe budget counter; batch charges are all-or-nothing."""

    def __init__(self, budget):
        if budget < 1:
            raise ValueError("budget must be positive")
        self.budget = int(budget)
        self._used = 0
        self._lock = threading.Lock()

    @property
    def used(self):
        return self._used

    @property
    def remaining(self):
        return self.budget - self._used

    def charge(self, count=1):
        with self._lock:
            if self._used + count > self.budget:
                raise BudgetExceededError(
                    f"budget exceeded: {self._used} used of {self.budget}, requested {count}"
                )
            self._used += count


@dataclass(frozen=True)
class OracleResponse:
    mode: str
    payload: object  # probability row (ndarray) or int class id

    @property
    def probabilities(self):
        """Probability row; hard labels are lifted to one-hot."""
        if self.mode == "probability_vector":
            return np.asarray(self.payload)
        row = np.zeros(self.payload[1])
        row[self.payload[0]] = 1.0
        return row


class OracleHandle:
    """The attacker-facing surface: query operations and shape metadata only."""

    def __init__(self, query, query_batch, input_shape, class_count, mode, remaining):
        self.query = query
        self.query_batch = query_batch
        self.input_shape = input_shape
        self.class_count = class_count
        self.mode = mode
        self._remaining = remaining

    @property
    def remaining_budget(self):
        return self._remaining()


class PredictionOracle:
    """Serves victim predictions under a query budget; never leaks parameters."""

    def __init__(self, victim, budget, mode="probability_vector"):
        if mode not in MODES:
            raise ValueError(f"unknown oracle mode {mode!r}")
        self._victim = victim
        self.ledger = QueryLedger(budget)
        self.mode = mode
        self.input_shape = victim.spec.input_shape
        self.class_count = victim.spec.class_count

    def _check(self, inputs):
        arr = np.asarray(inputs, dtype=np.float64)
        if arr.shape[1:] != self.input_shape:
            raise ShapeError(f"query shape {arr.shape[1:]} != victim input {self.input_shape}")
        return arr

    def _respond(self, prob_row):
        if self.mode == "probability_vector":
            return OracleResponse(self.mode, prob_row)
        label = int(np.argmax(prob_row))
        return OracleResponse(self.mode, (label, self.class_count))

    def query(self, single_input):
        batch = self._check(np.asarray(single_input, dtype=np.float64)[None])
        self.ledger.charge(1)
        return self._respond(models.predict(self._victim, batch)[0])

    def query_batch(self, inputs):
        batch = self._check(inputs)
        self.ledger.charge(len(batch))
        probs = models.predict(self._victim, batch)
        return [self._respond(row) for row in probs]

    def handle(self):
        return OracleHandle(
            self.query, self.query_batch, self.input_shape, self.class_count,
            self.mode, lambda: self.ledger.remaining,
        )


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        oracle = self.server.oracle
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            reply = self._process(oracle, line)
            self.wfile.write((json.dumps(reply) + "\n").encode())
            self.wfile.flush()

    @staticmethod
    def _process(oracle, line):
        req_id = None
        try:
            req = json.loads(line)
            req_id = req.get("id")
            arr = np.asarray(req["input"], dtype=np.float64).reshape(oracle.input_shape)
            resp = oracle.query(arr)
            if resp.mode == "probability_vector":
                return {"id": req_id, "probs": list(resp.payload)}
            return {"id": req_id, "label": resp.payload[0]}
        except BudgetExceededError:
            return {"id": req_id, "error": "budget_exceeded"}
        except Exception as exc:  # malformed JSON / bad shape: keep the connection open
            return {"id": req_id, "error": str(exc) or type(exc).__name__}


class OracleServer:
    """Newline-delimited JSON TCP server around a PredictionOracle."""

    def __init__(self, oracle, host="127.0.0.1", port=0):
        self._tcp = socketserver.ThreadingTCPServer((host, port), _LineHandler, bind_and_activate=True)
        self._tcp.daemon_threads = True
        self._tcp.oracle = oracle
        self._thread = None

    @property
    def address(self):
        return self._tcp.server_address

    def start(self):
        self._thread = threading.Thread(target=self._tcp.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._tcp.serve_forever()

    def shutdown(self):
        self._tcp.shutdown()
        self._tcp.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


class RemoteOracle:
    """Client for OracleServer with the same query surface as OracleHandle."""

    def __init__(self, host, port, input_shape, class_count, mode="probability_vector"):
        self.input_shape = tuple(input_shape)
        self.class_count = class_count
        self.mode = mode
        self._sock = socket.create_connection((host, port))
        self._rfile = self._sock.makefile("r", encoding="utf-8")
        self._next_id = 0

    def close(self):
        self._rfile.close()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _roundtrip(self, single_input):
        self._next_id += 1
        msg = {"id": self._next_id, "input": np.asarray(single_input, dtype=np.float64).ravel().tolist()}
        self._sock.sendall((json.dumps(msg) + "\n").encode())
        reply = json.loads(self._rfile.readline())
        if "error" in reply:
            if reply["error"] == "budget_exceeded":
                raise BudgetExceededError("remote oracle budget exceeded")
            raise ShapeError(f"remote oracle error: {reply['error']}")
        if "probs" in reply:
            return OracleResponse("probability_vector", np.asarray(reply["probs"]))
        return OracleResponse("hard_label", (reply["label"], self.class_count))

    def query(self, single_input):
        return self._roundtrip(single_input)

    def query_batch(self, inputs):
        return [self._roundtrip(row) for row in np.asarray(inputs, dtype=np.float64)]
