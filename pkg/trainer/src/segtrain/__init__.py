"""Training side of the segment-descriptor system.

Builds datasets from segmented point clouds, trains the descriptor network
with a combined classification + reconstruction objective (or a batch-hard
triplet variant), trains the semantics head on frozen descriptors, and exports
everything as SEGW tensor containers that the mapping runtime loads directly.
"""

__version__ = "0.1.0"
