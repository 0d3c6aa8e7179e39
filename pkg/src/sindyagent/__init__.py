"""Sparse ODE discovery from trajectory data with an LLM-guided loop.

The numerical core (dynamics, features, sparse_opt, model) stands alone;
the agent layer (specdsl, llm, summarize, rag, orchestrator) wraps it in a
propose-fit-score-reflect loop driven by candidate configurations emitted
by a language model.
"""

__version__ = "0.1.0"
