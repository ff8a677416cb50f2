"""Peer-to-peer tableau reasoner for coupled ontology units."""

__version__ = "0.1.0"
