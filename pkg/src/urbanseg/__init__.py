"""Building instance segmentation for large urban point clouds."""
