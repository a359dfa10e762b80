"""Client generation, micro-corpus and experiment matrix."""
