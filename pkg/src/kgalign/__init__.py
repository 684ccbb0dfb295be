"""kgalign aligns the entities of two knowledge graphs with structural embeddings and a language model."""

__version__ = "0.1.0"

__repository__ = "https://github.com/kgalign/kgalign"
__issues__ = "https://github.com/kgalign/kgalign/issues"

__license__ = "MIT"

__docformat__ = "numpy"
