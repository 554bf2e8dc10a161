#!/usr/bin/env python3
"""Conformant wire-protocol stub: fixed 4-dim encoder, trivial heads."""
import json
import sys

DIM = 4
TOPICS = ["First Party Collection", "Third Party Sharing", "Usage",
          "Data Retention", "Data Security", "Edit/Control",
          "Specific Audiences", "Contact Information", "Policy Change"]
TASKS = {"importance", "topic", "risk", "sensitivity"}


def encode(text):
    # Deterministic toy features from character statistics.
    return [float(len(text) % 17), float(sum(map(ord, text)) % 31),
            float(text.count(" ")), 1.0]


def handle(msg):
    op = msg.get("op")
    if op == "capabilities":
        return {"capabilities": sorted(TASKS) + ["rewrite"]}
    if op == "encode":
        text = msg.get("text")
        if not text:
            return {"error": "missing text"}
        return {"features": encode(text)}
    if op == "classify":
        task = msg.get("task")
        feats = msg.get("features")
        if task not in TASKS:
            return {"error": f"unsupported task {task!r}"}
        if not isinstance(feats, list) or len(feats) != DIM:
            return {"error": "DimensionMismatch"}
        if task == "topic":
            scores = {t: 0.0 for t in TOPICS}
            scores[TOPICS[int(feats[0]) % len(TOPICS)]] = 1.0
            return {"scores": scores}
        return {"scores": {"positive": (feats[1] % 10) / 10.0}}
    if op == "rewrite":
        text = msg.get("text")
        if not text:
            return {"error": "missing text"}
        return {"text": "Plainly: " + text}
    return {"error": f"unknown op {op!r}"}


def main():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            msg = {}
        result = handle(msg)
        response = {"id": msg.get("id"), "ok": "error" not in result}
        response.update(result)
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
