"""gridgraph - occupancy grids, pose-graph maps and 2D-LiDAR localization benchmarks."""

__version__ = "0.1.0"
