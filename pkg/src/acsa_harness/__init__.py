"""Experiment harness for zero-shot aspect-category sentiment analysis.

Provides UMR graph handling, dataset loaders, prompt construction, an LLM
client with replay fixtures, output post-processing, micro-F1 evaluation,
and a three-way factorial ANOVA over run scores.
"""

__version__ = "0.1.0"
