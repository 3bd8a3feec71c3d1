"""Favorite-playlist network analysis.

Build the weighted user-track graph from favorite playlists, propagate tags,
detect communities, and measure diversity, divergence and age-related
preference patterns.
"""

from .community import CommunityAssignment, detect_communities, modularity
from .graph import BipartiteGraph, build_graph, total_attention
from .ingest import load_economics, load_playlists, write_playlists
from .model import Dataset, Playlist, TagSchema, TrackRecord, UserRecord, ValidationError
from .tagmap import map_tags_to_group, map_tags_to_tracks, map_tags_to_users

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph", "CommunityAssignment", "Dataset", "Playlist", "TagSchema",
    "TrackRecord", "UserRecord", "ValidationError", "build_graph", "detect_communities",
    "load_economics", "load_playlists", "map_tags_to_group", "map_tags_to_tracks",
    "map_tags_to_users", "modularity", "total_attention", "write_playlists",
]
