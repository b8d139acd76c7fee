"""Scoring endpoint for the `remote` backend adapter, backed by Hugging Face
transformers.

    pip install torch transformers
    python tools/nli_server.py --port 8765 --preload facebook/bart-large-mnli

POST /score  {"model": "...", "pairs": [{"premise": "...", "hypothesis": "..."}]}
          -> {"scores": [{"logits": [entailment, neutral, contradiction]}, ...]}
GET /healthz -> 200 once every preloaded model is ready, 503 while loading.

Models not preloaded are loaded on first use. Logits are reordered from the
checkpoint's own label order using its id2label config.
"""

import argparse
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import torch
from transformers import AutoModelForSequenceClassification, AutoTokenizer

ROLES = ("entailment", "neutral", "contradiction")


class Model:
    def __init__(self, name, device):
        self.tokenizer = AutoTokenizer.from_pretrained(name)
        self.model = AutoModelForSequenceClassification.from_pretrained(name).to(device).eval()
        self.device = device
        labels = {i: l.lower() for i, l in self.model.config.id2label.items()}
        try:
            self.order = [next(i for i, l in labels.items() if l.startswith(role)) for role in ROLES]
        except StopIteration:
            raise ValueError(f"{name}: cannot map labels {labels} to entailment/neutral/contradiction")
        self.lock = threading.Lock()

    def score(self, pairs, batch_size):
        out = []
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            enc = self.tokenizer(
                [p["premise"] for p in chunk],
                [p["hypothesis"] for p in chunk],
                return_tensors="pt",
                padding=True,
                truncation="only_first",
            ).to(self.device)
            with self.lock, torch.no_grad():
                logits = self.model(**enc).logits.float().cpu()
            out.extend({"logits": [row[i].item() for i in self.order]} for row in logits)
        return out


class Registry:
    def __init__(self, device, batch_size):
        self.device = device
        self.batch_size = batch_size
        self.models = {}
        self.loading = set()
        self.lock = threading.Lock()

    def get(self, name):
        with self.lock:
            if name in self.models:
                return self.models[name]
            self.loading.add(name)
        try:
            model = Model(name, self.device)
        finally:
            with self.lock:
                self.loading.discard(name)
        with self.lock:
            return self.models.setdefault(name, model)

    def ready(self):
        with self.lock:
            return not self.loading


def handler(registry):
    class Handler(BaseHTTPRequestHandler):
        def reply(self, code, body):
            data = json.dumps(body).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path != "/healthz":
                return self.reply(404, {"error": "not found"})
            if registry.ready():
                self.reply(200, {"status": "ok", "models": sorted(registry.models)})
            else:
                self.reply(503, {"status": "loading"})

        def do_POST(self):
            if self.path != "/score":
                return self.reply(404, {"error": "not found"})
            try:
                req = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))))
                model, pairs = req["model"], req["pairs"]
            except (ValueError, KeyError, TypeError) as e:
                return self.reply(400, {"error": f"bad request: {e}"})
            try:
                scores = registry.get(model).score(pairs, registry.batch_size)
            except OSError as e:
                return self.reply(404, {"error": f"cannot load {model}: {e}"})
            self.reply(200, {"scores": scores})

        def log_message(self, fmt, *args):
            pass

    return Handler


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bind", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8765)
    ap.add_argument("--device", default="cuda" if torch.cuda.is_available() else "cpu")
    ap.add_argument("--batch-size", type=int, default=16)
    ap.add_argument("--preload", action="append", default=[], help="checkpoint to load at startup (repeatable)")
    args = ap.parse_args()

    registry = Registry(args.device, args.batch_size)
    with registry.lock:
        registry.loading.update(args.preload)
    for name in args.preload:
        threading.Thread(target=registry.get, args=(name,), daemon=True).start()

    server = ThreadingHTTPServer((args.bind, args.port), handler(registry))
    print(f"listening on http://{args.bind}:{args.port}", flush=True)
    server.serve_forever()


if __name__ == "__main__":
    main()
