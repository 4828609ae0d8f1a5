"""ctxprobe: how much does a context change a masked LM's factual predictions?

The package covers the full measurement loop: loading a relational cloze
probe, retrieving paragraphs with a hashed TF-IDF index, constructing
oracle / retrieved / adversarial / generated contexts, assembling
segmented inputs, scoring them against pluggable (mock or remote)
scorers, and aggregating precision, robustness and relevance-gate
statistics.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    context_builder,
    corpus_index,
    evaluation,
    featurizer,
    probe_data,
    scorer,
    wire,
)
