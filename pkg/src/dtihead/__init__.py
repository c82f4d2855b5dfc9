"""Trainable drug-target affinity head over precomputed embeddings.

FiLM-conditioned projection, cosine-distance RBF regression head, and joint
triplet + regression/classification training with hand-derived gradients.
"""

__version__ = "0.1.0"
