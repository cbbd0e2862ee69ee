"""NLI scorer process for `nli.kind = "external"`.

Reads one JSON object {"premise", "hypothesis"} per line on stdin and writes
one {"entailment", "neutral", "contradiction"} line per request on stdout.
Needs `transformers` and `torch`; the model is set with NLI_MODEL.
"""
import json
import os
import sys

from transformers import AutoModelForSequenceClassification, AutoTokenizer
import torch

MODEL = os.environ.get("NLI_MODEL", "facebook/bart-large-mnli")

tokenizer = AutoTokenizer.from_pretrained(MODEL)
model = AutoModelForSequenceClassification.from_pretrained(MODEL).eval()
labels = {v.lower(): k for k, v in model.config.id2label.items()}

for line in sys.stdin:
    req = json.loads(line)
    inputs = tokenizer(req["premise"], req["hypothesis"], return_tensors="pt", truncation=True)
    with torch.no_grad():
        probs = torch.softmax(model(**inputs).logits[0], dim=-1).tolist()
    reply = {name: probs[labels[name]] for name in ("entailment", "neutral", "contradiction")}
    print(json.dumps(reply), flush=True)
