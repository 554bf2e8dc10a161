#!/usr/bin/env python3
"""Protocol stub that answers capabilities promptly but stalls on everything
else (for timeout testing)."""
import json
import sys
import time

for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    msg = json.loads(line)
    if msg.get("op") == "capabilities":
        out = {"id": msg.get("id"), "ok": True,
               "capabilities": ["importance", "topic", "risk", "sensitivity"]}
    else:
        time.sleep(2.0)
        out = {"id": msg.get("id"), "ok": True, "features": [1.0]}
    sys.stdout.write(json.dumps(out) + "\n")
    sys.stdout.flush()
