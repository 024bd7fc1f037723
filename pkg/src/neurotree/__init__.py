"""Age-aware dynamic brain-graph learning with hierarchical tree-trunk interpretation."""
__version__ = "0.1.0"
