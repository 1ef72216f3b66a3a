"""Keypoint-prior person instance segmentation.

Given oracle keypoints and an external per-pixel person score map, the
library builds geodesic shape priors on a superpixel graph, fuses them with
the score map, and produces per-pixel instance labelings.  Bounding-box and
grid distance-transform baselines plus a COCO-style AP evaluator round out
the toolkit.
"""

__version__ = "0.1.0"
