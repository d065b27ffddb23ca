"""Dataset pipeline, evaluation and benchmarking."""
