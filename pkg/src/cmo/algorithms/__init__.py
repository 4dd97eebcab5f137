"""Oblivious analytics built on the container API, and their baselines."""

from .kmeans import initial_centroids, kmeans
from .mergesort import BUFFER_CONSTANT, buffer_capacity, oblivious_merge_sort
from .search import NOT_FOUND, streaming_binary_search
from .shuffle import cell_slots, melbourne_shuffle
from .sorting import (
    plain_quicksort, quicksort_in_section, shuffle_sort, word_oblivious_sort,
)

__all__ = [
    "BUFFER_CONSTANT", "NOT_FOUND", "buffer_capacity", "cell_slots", "initial_centroids",
    "kmeans", "melbourne_shuffle", "oblivious_merge_sort", "plain_quicksort",
    "quicksort_in_section", "shuffle_sort", "streaming_binary_search", "word_oblivious_sort",
]
