# tcm/__init__.py
"""QUBO-based test-suite minimization with an LLM generate/minimize/refine pipeline."""

__version__ = "0.1.0"
