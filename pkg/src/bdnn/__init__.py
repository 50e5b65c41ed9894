"""Binary deep neural network hashing: training, encoding and Hamming retrieval."""

__version__ = "0.1.0"
