"""Language-identification pipeline toolkit for imbalanced code-switched speech.

Pipeline stages: synthetic corpus generation -> timestamp segmentation ->
acoustic features -> hierarchical multi-rate encoder embeddings ->
sequence classifiers -> imbalance-aware metrics and clustering analysis.
"""

__version__ = "0.1.0"
