"""Grid spatial index with duplicate-free window queries and joins."""

from ._backend import get_backend, set_backend
from .baselines import (OneLayerGrid, QuadTree, one_layer_query, one_layer_query_batch,
                        quadtree_build, quadtree_query, quadtree_query_batch)
from .dataio import DatasetStats, GenSpec, gen_windows, generate, load_csv, normalize, write_csv
from .geometry import Metrics, Point, Rect, RectArray, Window, intersects, reference_point
from .grid import (ClassId, GridConfig, Tile, TileExtent, TwoLayerGrid, classify, suggest_granularity,
                   tile_of, tile_range)
from .join import (EVALUATED_KINDS, SKIPPED_KINDS, JoinPair, YTestMode, build_temp_reduced,
                   join_identical_grids, pbsm_one_layer_join, plane_sweep, probe_join,
                   reduced_plane_sweep, reduced_plane_sweep_batch, rewindow_classes, tile_join,
                   transform_join)
from .query import (ClassMask, ComparisonPlan, comparison_plan, relevant_classes, window_query,
                    window_query_batch)

__version__ = "0.1.0"
