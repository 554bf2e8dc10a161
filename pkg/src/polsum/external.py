"""External-process expert backend speaking newline-delimited JSON.

Requests:  {"id": u64, "op": "encode"|"classify"|"rewrite"|"capabilities",
            "task"?: str, "text"?: str, "features"?: [f32]}
Responses: {"id": u64, "ok": bool, "features"?: [f32], "scores"?: {label: f32},
            "text"?: str, "error"?: str}

One response per request; ids unique per session.  The child's stdout carries
the protocol, stderr is passed through for logging.
"""
from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass

from .corpus import CLASSIFIABLE_TOPICS, parse_category
from .experts import (
    CAP_REWRITE,
    BackendError,
    DimensionMismatch,
    ExpertBackend,
    FeatureVector,
    GenerationFailure,
    RewriteResult,
    Task,
    TaskLabel,
    UnsupportedTask,
)


class SpawnFailure(BackendError):
    pass


class ProtocolViolation(BackendError):
    pass


class BackendTimeout(BackendError):
    def __init__(self, op: str, timeout_ms: int):
        super().__init__(f"{op} timed out after {timeout_ms} ms")
        self.op = op
        self.timeout_ms = timeout_ms


@dataclass
class ExternalConfig:
    timeout_ms: int = 10_000
    tag: str = "external"


class ExternalBackend(ExpertBackend):
    """Proxies encode/classify/rewrite over a child process's stdio.

    External rewrites travel as text (pooled features cannot drive a decoder
    across the process boundary), so each rewrite call attributes one encode
    to the counter.
    """

    thread_safe = False  # one stdio stream; callers are serialized

    def __init__(self, command: str | list[str], config: ExternalConfig | None = None):
        super().__init__()
        self._config = config or ExternalConfig()
        self.backend_tag = self._config.tag
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise SpawnFailure(f"cannot start {argv[0]!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_stdout, daemon=True)
        self._reader.start()
        self._next_id = 0
        self._lock = threading.Lock()
        self._capabilities = frozenset(self._request("capabilities", {}).get("capabilities", []))

    def _read_stdout(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _request(self, op: str, payload: dict) -> dict:
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            message = {"id": req_id, "op": op, **payload}
            if self._proc.poll() is not None or self._proc.stdin is None:
                raise BackendError("backend process is not running")
            try:
                self._proc.stdin.write(json.dumps(message) + "\n")
                self._proc.stdin.flush()
            except BrokenPipeError as exc:
                raise BackendError("backend process closed its stdin") from exc
            try:
                line = self._lines.get(timeout=self._config.timeout_ms / 1000.0)
            except queue.Empty:
                raise BackendTimeout(op, self._config.timeout_ms) from None
            if line is None:
                raise ProtocolViolation("backend closed stdout mid-session")
            try:
                response = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolViolation(f"response is not JSON: {line!r}") from exc
            if not isinstance(response, dict) or response.get("id") != req_id:
                raise ProtocolViolation(
                    f"response id {response.get('id')!r} does not match request {req_id}")
            if not response.get("ok", False):
                raise BackendError(response.get("error", "backend reported failure"))
            return response

    @property
    def capabilities(self) -> frozenset[str]:
        return self._capabilities

    def encode(self, sentence: str) -> FeatureVector:
        if not sentence.strip():
            raise BackendError("cannot encode an empty sentence")
        response = self._request("encode", {"text": sentence})
        features = response.get("features")
        if not isinstance(features, list) or not features:
            raise ProtocolViolation("encode response lacks a features array")
        values = tuple(float(v) for v in features)
        if any(not math.isfinite(v) for v in values):
            raise ProtocolViolation("non-finite feature values")
        self._count_encode()
        return FeatureVector(dim=len(values), backend_tag=self.backend_tag,
                             values=values)

    def classify(self, task: Task, fv: FeatureVector) -> TaskLabel:
        if task.value not in self._capabilities:
            raise UnsupportedTask(task.value)
        if fv.backend_tag != self.backend_tag:
            raise DimensionMismatch("feature vector from a different backend")
        response = self._request("classify", {"task": task.value,
                                              "features": list(fv.values)})
        scores = response.get("scores")
        if not isinstance(scores, dict):
            raise ProtocolViolation("classify response lacks scores")
        if task is Task.TOPIC:
            parsed = {parse_category(k): float(v) for k, v in scores.items()}
            full = {c: parsed.get(c, 0.0) for c in CLASSIFIABLE_TOPICS}
            total = sum(full.values())
            if total <= 0:
                raise ProtocolViolation("topic scores do not form a distribution")
            return TaskLabel(task=task,
                             scores={c: v / total for c, v in full.items()})
        prob = scores.get("positive")
        if prob is None or not 0.0 <= float(prob) <= 1.0:
            raise ProtocolViolation("binary classify response needs scores.positive in [0,1]")
        return TaskLabel(task=task, probability=float(prob))

    def rewrite(self, sentence: str | None = None,
                features: FeatureVector | None = None) -> RewriteResult:
        if CAP_REWRITE not in self._capabilities:
            raise UnsupportedTask(CAP_REWRITE)
        if sentence is None:
            raise GenerationFailure(
                "external rewrite requires sentence text (features cannot cross "
                "the process boundary)")
        response = self._request("rewrite", {"text": sentence})
        text = response.get("text")
        if not isinstance(text, str) or not text:
            raise ProtocolViolation("rewrite response lacks text")
        self._count_encode()  # the server re-encodes the text internally
        return RewriteResult(text)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=2)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()


def open_external_backend(command: str | list[str],
                          config: ExternalConfig | None = None) -> ExternalBackend:
    return ExternalBackend(command, config)


def run_conformance(command: str | list[str],
                    timeout_ms: int = 30_000) -> list[str]:
    """Drive 20 scripted request/response exchanges against a protocol server.

    Returns a list of violation strings; an empty list means the server
    conforms.  Checks id echo, one-response-per-request, finite floats,
    score-distribution shape and error signaling for bad requests.
    """
    violations: list[str] = []
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    try:
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                stdout=subprocess.PIPE, text=True, bufsize=1)
    except OSError as exc:
        return [f"spawn failure: {exc}"]
    lines: queue.Queue[str | None] = queue.Queue()

    def reader():
        assert proc.stdout is not None
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)

    threading.Thread(target=reader, daemon=True).start()

    def exchange(req: dict) -> dict | None:
        assert proc.stdin is not None
        proc.stdin.write(json.dumps(req) + "\n")
        proc.stdin.flush()
        try:
            line = lines.get(timeout=timeout_ms / 1000.0)
        except queue.Empty:
            violations.append(f"id {req['id']}: no response within {timeout_ms} ms")
            return None
        if line is None:
            violations.append(f"id {req['id']}: server closed stdout")
            return None
        try:
            resp = json.loads(line)
        except json.JSONDecodeError:
            violations.append(f"id {req['id']}: non-JSON response {line!r}")
            return None
        if not isinstance(resp, dict):
            violations.append(f"id {req['id']}: response is not an object")
            return None
        if resp.get("id") != req["id"]:
            violations.append(
                f"id {req['id']}: response id mismatch ({resp.get('id')!r})")
        if "ok" not in resp or not isinstance(resp["ok"], bool):
            violations.append(f"id {req['id']}: missing boolean 'ok'")
        return resp

    def check_features(resp: dict | None, label: str) -> list[float] | None:
        if resp is None:
            return None
        feats = resp.get("features")
        if not resp.get("ok") or not isinstance(feats, list) or not feats:
            violations.append(f"{label}: missing features array")
            return None
        if any(not isinstance(v, (int, float)) or not math.isfinite(v) for v in feats):
            violations.append(f"{label}: non-finite feature values")
            return None
        return [float(v) for v in feats]

    rid = 0

    def nid() -> int:
        nonlocal rid
        rid += 1
        return rid

    try:
        # 1: capabilities
        resp = exchange({"id": nid(), "op": "capabilities"})
        caps: set[str] = set()
        if resp is not None:
            raw = resp.get("capabilities")
            if not resp.get("ok") or not isinstance(raw, list):
                violations.append("capabilities: missing capability list")
            else:
                caps = set(raw)
                for t in Task:
                    if t.value not in caps:
                        violations.append(f"capabilities: task {t.value!r} not advertised")
        probe = "We may share your location data with third parties."
        # 2-3: encode determinism
        first = check_features(exchange({"id": nid(), "op": "encode", "text": probe}),
                               "encode #1")
        second = check_features(exchange({"id": nid(), "op": "encode", "text": probe}),
                                "encode #2")
        if first is not None and second is not None and first != second:
            violations.append("encode: same sentence produced different vectors")
        # 4: a second distinct sentence encodes fine
        other = check_features(
            exchange({"id": nid(), "op": "encode",
                      "text": "You can delete your account at any time."}),
            "encode #3")
        dim = len(first) if first else (len(other) if other else 4)
        feats = first or other or [0.0] * dim
        # 5-8: classify each task on encoded features
        for task in Task:
            resp = exchange({"id": nid(), "op": "classify", "task": task.value,
                             "features": feats})
            if resp is None or not resp.get("ok"):
                violations.append(f"classify {task.value}: request failed")
                continue
            scores = resp.get("scores")
            if not isinstance(scores, dict):
                violations.append(f"classify {task.value}: missing scores")
                continue
            vals = list(scores.values())
            if any(not isinstance(v, (int, float)) or not math.isfinite(v) for v in vals):
                violations.append(f"classify {task.value}: non-finite scores")
                continue
            if task is Task.TOPIC:
                if abs(sum(float(v) for v in vals) - 1.0) > 1e-4 or any(v < 0 for v in vals):
                    violations.append("classify topic: scores are not a distribution")
            else:
                prob = scores.get("positive")
                if prob is None or not 0.0 <= float(prob) <= 1.0:
                    violations.append(
                        f"classify {task.value}: scores.positive not in [0,1]")
        # 9: classify with a mismatched feature dimension must fail cleanly
        resp = exchange({"id": nid(), "op": "classify", "task": "importance",
                         "features": feats + [0.0]})
        if resp is not None and resp.get("ok"):
            violations.append("classify: dimension mismatch was not rejected")
        # 10: unknown task must fail cleanly
        resp = exchange({"id": nid(), "op": "classify", "task": "astrology",
                         "features": feats})
        if resp is not None and resp.get("ok"):
            violations.append("classify: unknown task was not rejected")
        # 11: unknown op must fail cleanly
        resp = exchange({"id": nid(), "op": "transmogrify"})
        if resp is not None and resp.get("ok"):
            violations.append("unknown op was not rejected")
        # 12: rewrite (or its absence must be signaled)
        resp = exchange({"id": nid(), "op": "rewrite", "text": probe})
        if resp is not None:
            if CAP_REWRITE in caps:
                if not resp.get("ok") or not isinstance(resp.get("text"), str) \
                        or not resp.get("text"):
                    violations.append("rewrite: missing output text")
            elif resp.get("ok"):
                violations.append("rewrite: succeeded despite missing capability")
        # 13-20: a burst of encodes with strictly increasing ids
        for i in range(8):
            check_features(
                exchange({"id": nid(), "op": "encode",
                          "text": f"Sentence number {i} about data retention."}),
                f"burst encode {i}")
        # No unsolicited extra responses may remain queued.
        try:
            extra = lines.get(timeout=0.2)
            if extra is not None and extra.strip():
                violations.append(f"unsolicited extra response: {extra.strip()!r}")
        except queue.Empty:
            pass
    finally:
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=3)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()
    return violations
