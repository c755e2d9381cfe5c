"""Trajectory clustering and conformance monitoring for terminal-area radar tracks."""

from .clustering import DBSCAN, OUTLIER, ClusterResult, DbscanParams, KMeans, KmeansParams, dbscan, kmeans
from .geom import TurningConfig, convex_hull, detect_turning_points, estimate_headings, lowpass, point_in_polygon
from .ims import ImsKnowledgeBase, InductiveMonitor, classify, fragment_trajectory, score, train
from .pca_routes import RouteClusterer, RouteModel, augment, fit_pca, fit_route_model, project
from .trajdata import (FlightMetadata, ResampledTrajectory, TrackPoint, Trajectory, filter_flights,
                       parse_tracks, read_tracks, resample, serialize_tracks, write_tracks)
from .waypoints import WaypointRouteClusterer, cluster_sequences, lcs_length, trajectory_to_sequence

__version__ = "0.1.0"
