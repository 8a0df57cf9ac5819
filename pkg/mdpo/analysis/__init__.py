from .landscape import LandscapeGrid, landscape, landscape_series, grid_axis, asymmetry_fraction, \
    trace_overlay_frame, write_landscape, write_trace_overlay
from .theorem import MirrorSolution, project_simplex, maximize_regularized, quadratic_oracle, \
    trajectory_distribution, mirror_solutions, verify_mirror_solution
