import json
import pathlib

import pytest

from kgrag.llm import MockLexicon, MockProvider, default_templates
from kgrag.ontology import parse_ontology
from kgrag.tokenizer import load_vocab
from kgrag.vecindex import DeterministicEmbedder, VectorIndex, VectorRecord, embed_text

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


@pytest.fixture(scope="session")
def vocab():
    return load_vocab((FIXTURES / "vocab.bpe").read_text())


@pytest.fixture(scope="session")
def schema():
    return parse_ontology((FIXTURES / "ontology.ont").read_text())


@pytest.fixture(scope="session")
def lexicon():
    return MockLexicon.from_file(FIXTURES / "lexicon.txt")


@pytest.fixture(scope="session")
def templates():
    return default_templates()


@pytest.fixture()
def mock_provider(lexicon):
    return MockProvider(lexicon=lexicon)


@pytest.fixture(scope="session")
def embedder():
    return DeterministicEmbedder()


def build_kb_index(embedder) -> VectorIndex:
    index = VectorIndex("reference_kb", embedder.dim, embedder.model_id)
    records = []
    for line in (FIXTURES / "kb.jsonl").read_text().splitlines():
        obj = json.loads(line)
        records.append(
            VectorRecord(
                record_id=obj["qid"],
                vector=embed_text(f"{obj['label']}. {obj['text']}", embedder),
                payload={
                    "label": obj["label"],
                    "text": obj["text"],
                    "qid": obj["qid"],
                    "collection": "reference_kb",
                },
            )
        )
    index.upsert(records)
    return index


@pytest.fixture(scope="session")
def kb_index(embedder):
    return build_kb_index(embedder)


def absolute_manifest_text() -> str:
    lines = []
    for line in (FIXTURES / "manifest.jsonl").read_text().splitlines():
        record = json.loads(line)
        record["path"] = str(FIXTURES.parent.parent / record["path"])
        lines.append(json.dumps(record))
    return "\n".join(lines) + "\n"


def make_engine(store_dir) -> "Engine":
    from kgrag.config import EngineConfig
    from kgrag.engine import Engine

    config = EngineConfig(
        store_dir=str(store_dir),
        ontology=str(FIXTURES / "ontology.ont"),
        vocab=str(FIXTURES / "vocab.bpe"),
        provider="mock",
        mock_lexicon=str(FIXTURES / "lexicon.txt"),
        reference_kb=str(FIXTURES / "kb.jsonl"),
    )
    return Engine(config)


@pytest.fixture(scope="session")
def curated_engine(tmp_path_factory):
    """Engine over a store curated once from the fixture corpus."""
    store = tmp_path_factory.mktemp("store")
    engine = make_engine(store)
    summary = engine.curate(absolute_manifest_text())
    assert summary.failures == []
    return engine
