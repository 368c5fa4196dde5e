"""Knowledge-graph hybrid-RAG engine.

Curates an ontology-guided knowledge graph plus vector indexes from
multi-format document corpora through a pluggable LLM provider, and
answers natural-language queries by fusing graph-pattern matches with
vector similarity into provenance-cited responses.
"""

__version__ = "0.1.0"
