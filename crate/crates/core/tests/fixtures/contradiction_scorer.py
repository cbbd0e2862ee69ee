"""Scorer fixture: identical texts entail each other, anything else is
judged a contradiction with probability 0.94."""
import json
import sys

for line in sys.stdin:
    req = json.loads(line)
    if req["premise"] == req["hypothesis"]:
        reply = {"entailment": 1.0, "neutral": 0.0, "contradiction": 0.0}
    else:
        reply = {"entailment": 0.03, "neutral": 0.03, "contradiction": 0.94}
    print(json.dumps(reply), flush=True)
