"""maskforge: reverse region-entity annotation toolkit.

Builds knowledge-augmented text references, normalizes segmenter outputs,
filters and corrects annotations by model ensemble, assembles COCO-format
pixel-mask entity-linking datasets, constructs entity codes, and evaluates
predictions. The `forge` CLI orchestrates the pipeline; a small HTTP API
backs the human review console.
"""

__version__ = "0.1.0"
