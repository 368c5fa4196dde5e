"""Capture real service responses over the fixture stores into JSON files
used by the frontend test suite. Run from the repo root:

    python3 tools/capture_ui_fixtures.py
"""

import json
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from fastapi.testclient import TestClient

from conftest import absolute_manifest_text, make_engine
from kgrag.service import create_app

FIG_QUERY = "Describe the role of Russia in the war of Odessa"
OUT = ROOT / "frontend" / "tests" / "fixtures"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        engine = make_engine(pathlib.Path(tmp) / "store")
        summary = engine.curate(absolute_manifest_text())
        assert not summary.failures
        client = TestClient(create_app(engine))

        def save(name: str, payload) -> None:
            (OUT / name).write_text(json.dumps(payload, indent=1, sort_keys=True))
            print(f"wrote {name}")

        result_kg = client.post("/api/query", json={"q": FIG_QUERY, "level": "kg"}).json()
        save("query_kg.json", result_kg)
        save("query_llm_only.json",
             client.post("/api/query", json={"q": FIG_QUERY, "level": "llm_only"}).json())

        node_id = next(c["id"] for c in result_kg["citations"] if c["kind"] == "node")
        save("node_detail.json", client.get(f"/api/graph/node/{node_id}").json())

        chunk_id = next(c["id"] for c in result_kg["citations"]
                        if c["kind"] == "chunk" and c["id"] in engine.chunks)
        from urllib.parse import quote

        save("chunk_detail.json", client.get(f"/api/chunks/{quote(chunk_id, safe='')}").json())
        save("projection.json", client.get("/api/embeddings/projection").json())
        save("stats.json", client.get("/api/graph/stats").json())


if __name__ == "__main__":
    main()
