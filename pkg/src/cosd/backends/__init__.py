"""Model backends: scripted tables, n-gram models, and HTTP clients."""

from .base import Backend, Distribution, Prediction, sort_entries
from .http import HttpBackend, parse_completion
from .ngram import NgramModel, load_ngram, save_ngram, train_ngram
from .table import TableBackend, load_table, peaked, save_table, uniform

__all__ = [
    "Backend",
    "Distribution",
    "HttpBackend",
    "NgramModel",
    "Prediction",
    "TableBackend",
    "load_ngram",
    "load_table",
    "parse_completion",
    "peaked",
    "save_ngram",
    "save_table",
    "sort_entries",
    "train_ngram",
    "uniform",
]
