"""Hierarchy-aware fine-grained entity typing and entity linking.

A CNN mention encoder with mention-level, entity-level (MIML), and linking
objectives, trained jointly with real- or complex-bilinear IS-A structure
losses over a concept DAG, plus character n-gram TFIDF candidate generation
and the matching evaluation protocols.
"""

__version__ = "0.1.0"

from .numcore import HAVE_COMPILED

__all__ = ["HAVE_COMPILED", "__version__"]
