"""Corpus ingestion, sample output, metrics and reports."""
