"""Segment-based 3D LiDAR mapping and global localization.

Point clouds are accumulated into a sparse voxel grid, incrementally
segmented, compressed into compact descriptors, and matched against a global
segment map; verified matches become loop-closure constraints for a pose-graph
solver. The same descriptor drives map reconstruction and semantic labeling.
"""

__version__ = "0.1.0"

from .geometry import SE3, PointCloud, apply_transform, centroid, eig_sym3

__all__ = [
    "SE3",
    "PointCloud",
    "apply_transform",
    "centroid",
    "eig_sym3",
    "__version__",
]
