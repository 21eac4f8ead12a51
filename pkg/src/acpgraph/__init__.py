"""AMR + ConceptNet graph construction and relation-path graph-transformer QA."""

__version__ = "0.1.0"
