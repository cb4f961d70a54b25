"""gedkit: grammatical error detection toolkit.

Pipeline pieces: corpus ingestion and label conversion (corpus), edit
alignment and error typing (edits), token representations and contextual
vector stores (embeddings), the multi-task bi-LSTM labeler with manual
gradients (model), AdaDelta training with early stopping (training),
token-level scoring (evaluation), and the CLI tying them together (cli).
"""

__version__ = "0.1.0"
