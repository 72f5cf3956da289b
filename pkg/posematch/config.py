# config.py

"""
posematch default configuration.
Every module reads its defaults from here; experiment files override them.
"""

# Camera (LINEMOD intrinsics, 640x480 sensor)
CAMERA = {
    'fx': 572.4114,
    'fy': 573.57043,
    'px': 325.2611,
    'py': 242.04899,
    'width': 640,
    'height': 480,
}

# Zoom-in operation
ZOOM = {
    'width': 640,
    'height': 480,
    'aspect_ratio': 4.0 / 3.0,
    'ratio_tolerance': 1e-6,
}

# Software rasterizer
RENDERING = {
    'ambient': 0.3,
    'diffuse': 0.7,
    'light_direction': (0.0, 0.0, -1.0),
    'default_color': (128, 128, 128),
    'near_plane': 1e-6,
}

# Built-in mesh used when an experiment names no PLY file
DEFAULT_MESH = {
    'kind': 'cube',
    'edge': 0.1,
}

# Depth guess from a detection box
DEPTH_GUESS = {
    'z_min': 0.2,
    'z_max': 3.0,
}

# Iterative refinement
REFINEMENT = {
    't_ref_deg': 2.0,
    'max_iters': 50,
    'policy': 'threshold',  # or 'fixed'
}

# Tracking state machine
TRACKING = {
    't_low_deg': 2.0,
    't_high_deg': 25.0,
    'refine_on_update': False,
}

# Oracle estimator noise
NOISE = {
    'gamma': 1.0,
    'sigma_rot_deg': 0.0,
    'sigma_trans_m': 0.0,
    'sigma_theta_deg': 0.0,
    'proportional': False,
    'seed': 0,
}

# Proportional noise scale s = theta / scale_deg + floor
PROPORTIONAL_NOISE = {
    'scale_deg': 45.0,
    'floor': 0.1,
}

ESTIMATOR_NAMES = ('oracle', 'contraction', 'noisy-proportional')

# Synthetic dataset
DATASET = {
    'n_samples': 200,
    'mask_dilate_max': 40,
    'bbox_jitter_px': 0.0,
    'depth_range': (0.4, 1.2),
    'seed': 0,
    'viewport_fraction': 0.8,
}

# Tracking trajectories
TRAJECTORY = {
    'n_frames': 100,
    'max_step_deg': 5.0,
    'min_step_deg': 2.5,
    'max_step_m': 0.005,
    'segment_frames': (5, 20),
    'wander_m': 0.05,
    'max_segment_deg': 90.0,
    'discontinuities': (),
}

# Losses and gradients
LOSS = {
    'n_views': 6,
    'kink_tolerance': 1e-9,
}

GRADIENT_CHECK = {
    'h': 1e-5,
    'rel_tolerance': 1e-4,
    'n_points': 100,
}

# (n deg, n cm) metric
METRIC = {
    'thresholds': (2, 5, 10),
}

# Zero-mean / unit-variance statistics of the regression targets
STANDARDIZATION = {
    'pool_size': 10000,
    'seed': 0,
    'max_angle_deg': 45.0,
    'max_trans_m': 0.02,
}

# End-to-end training sample schedule
TRAINING = {
    'restart_angle_deg': 25.0,
    'resample_max_deg': 10.0,
    'resample_max_m': 0.01,
    'refine_iters': 3,
}

# Report layout
REPORT = {
    'float_format': '%.6f',
    # Rótulos das colunas do summary.txt; limiares sem rótulo usam (n, n)
    'table_columns': {2: '(2°, 2 cm)', 5: '(5°, 5 cm)', 10: '(10°, 10 cm)'},
}

# Plot styles
PLOT_STYLES = {
    'views': {
        'figsize': (12, 8),
    },
    'trace': {
        'figsize': (10, 6),
        'colors': ['#1f77b4', '#d62728'],
    },
    'accuracy': {
        'figsize': (8, 5),
    },
    'tracking': {
        'figsize': (14, 6),
        'event_colors': {
            'initialized': '#2ca02c',
            'updated': '#1f77b4',
            'held': '#7f7f7f',
            'restarted': '#d62728',
        },
    },
    'dpi': 150,
}
