"""Drive the annotation service end to end in one process: create a session
over a synthetic dataset, label the queue like a human would (through the
HTTP API), trigger a training cycle, and print the curve.

Run:  python demos/06_annotation_service.py
For the real browser UI, see frontend/README notes in the repo README.
"""

import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from activeseg.ingestion import PreprocessingSpec, SyntheticConfig, generate_synthetic, save_dataset
from activeseg.service import create_app

workdir = Path(tempfile.mkdtemp(prefix="activeseg-demo-"))
dataset = workdir / "dataset"
pairs = generate_synthetic(SyntheticConfig(n_images=30, size=(32, 32), texture=0.1, seed=5))
save_dataset(pairs, dataset, preprocessing=PreprocessingSpec(target_size=(32, 32)))
print(f"dataset at {dataset}")

app = create_app(workdir / "service-data")
client = TestClient(app)

resp = client.post(
    "/sessions",
    json={
        "manifest": str(dataset / "manifest.json"),
        "config": {
            "k": 4,
            "images_per_cycle": 2,
            "seed": 3,
            "mc_sample_count": 2,
            "channels": [4, 8, 8],
            "train": {"learning_rate": 1e-3, "max_epochs": 5, "dropout": 0.5, "seed": 3},
        },
    },
)
session = resp.json()["id"]
print(f"session {session} created")

queue = client.get(f"/sessions/{session}/queue?k=8").json()["entries"]
print(f"seed queue holds {len(queue)} regions")

for entry in queue[:5]:
    rect = entry["rect"]
    center = [rect["row0"] + rect["height"] // 2, rect["col0"] + rect["width"] // 2]
    body = {"image_id": entry["image_id"], "region_index": entry["region_index"], "points": [center]}
    labeled = client.post(f"/sessions/{session}/labels", json=body).json()
    print(f"  labeled {entry['image_id']}/{entry['region_index']}: budget now {labeled['budget_seconds']:.0f} s")

client.post(f"/sessions/{session}/train")
while True:
    status = client.get(f"/sessions/{session}/status").json()
    if status["job"]["state"] != "training":
        break
    time.sleep(0.2)
print(f"cycle {status['cycle']} done, val dice {status['val_dice']}")

print("\ncurve so far:")
print(client.get(f"/sessions/{session}/curve").text)
print("to annotate in a browser instead:")
print(f"  activeseg serve --host 127.0.0.1 --port 8008 --data-dir {workdir / 'service-data'}")
print("  cd frontend && npm install && npm run build && python3 -m http.server 8080")
print(f"  open http://localhost:8080/?service=http://127.0.0.1:8008&session={session}")
