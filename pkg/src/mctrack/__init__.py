"""Batch multi-camera multi-object tracking.

Pipeline: 3D pre-clustering of detections, tracklet repair, affinity
costs, lifted multicut over a spatial-temporal tracking graph, and 3D
trajectory interpolation, with a synthetic scene simulator and a
CLEAR-MOT/IDF1 evaluation harness.
"""

__version__ = "0.1.0"
