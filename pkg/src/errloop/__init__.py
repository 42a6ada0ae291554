"""Error-driven training data synthesis and selection pipeline.

Finds a target model's failures on math corpora, abstracts them into
reviewed error types via an instructor model, synthesizes error-type-specific
training data, scores it with a one-shot-learning metric, and iterates.
Every model call goes through a pluggable chat-completion gateway so the
whole pipeline runs against scripted mock backends.
"""

__version__ = "0.1.0"
