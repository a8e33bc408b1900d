"""Multi-UAV aerial highway simulator with terrestrial base stations, a HAPS
meta-controller and pluggable (including LLM-driven) edge policies."""

__version__ = "0.1.0"
