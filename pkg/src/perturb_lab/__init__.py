"""Square-cycle embeddings in randomly perturbed graphs: oracles, certificates and pipelines."""

__version__ = "0.1.0"
