"""Topic-guided multi-document summarization with a structured convolutional decoder."""

__version__ = "0.1.0"
