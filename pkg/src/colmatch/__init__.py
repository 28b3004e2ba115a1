"""colmatch: schema matching between two tables via column embeddings.

Pipeline: sample column values, serialize columns to text, embed, retrieve
ranked candidate matches by cosine similarity, then optionally rerank with
a bipartite assignment step or an LLM scoring step.  A self-supervised
fine-tuning stage can train a linear projection head on top of the frozen
embeddings using synthetic training classes.
"""

__version__ = "0.1.0"
