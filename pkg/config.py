"""
Configuration settings for the Lagrange VQA differential-equation solver.
"""

# Database settings (run registry, created inside the output directory)
DATABASE_PATH = 'runs.db'
DATABASE_ECHO = False

# Output settings
OUTPUT_DIR = 'results'
OUTPUT_DIR_ENV = 'LAGRANGE_VQA_OUTPUT_DIR'

# Simulator settings
SIMULATOR_CONFIG = {
    'max_qubits': 24,
    'chunk_amplitudes': 2 ** 22,  # amplitudes held per batched simulation chunk
}

# Optimizer and convergence settings
SOLVER_CONFIG = {
    'beta1': 0.9,
    'beta2': 0.999,
    'epsilon': 1e-8,
    'eps_loss': 1e-4,
    'eps_grad': 1e-4,
    'divergence_limit': 1e6,
    'learning_rate': 0.01,
    'distance': 'mse',
}

# Two-part evolving-node schedule
SCHEDULE_CONFIG = {
    'initial_active': 3,
    'window': 3,
    # (loss above which, learning rate) checked in order; below all thresholds -> final_lr
    'lr_thresholds': ((0.1, 0.04), (0.02, 0.02)),
    'final_lr': 0.01,
    'part2_lr': 0.01,
    'part2_sweeps': 1,
    # iteration caps per part-1 stage and per part-2 window; 0 waits for the gradient threshold
    'stage_iters': 190,
    'window_iters': 150,
    # restart the Adam moments whenever the register grows or the window moves
    'reset_moments': True,
}

# Finite-difference steps used by the verification suite
FINITE_DIFFERENCE_CONFIG = {
    'first_order_step': 1e-5,
    'second_order_step': 1e-4,
    'first_order_tol': 1e-6,
    'second_order_tol': 1e-4,
}

# Problem defaults
DMSS_CONFIG = {
    'mass': 1.0,
    'damping': 1.0,
    'stiffness': 1.0,
    'u0': 1.0,
    'du0': 0.0,
    'physical_interval': (0.0, 10.0),
    'ki_training_interval': (0.0, 12.0),
    'encoded_interval': (0.0, 0.9),
    # (DE, constraint, regularization) loss weights per solver
    'hl_eta': (1.0, 0.6, 1.0),
    'ki_eta': (1.0, 1.0, 0.0),
}

POISSON_CONFIG = {
    'n_src': 5,
    'interval': (0.0, 31.0),
    'n_nodes': 3,
    'amplitude_scale': 25.0,
    'eta': (1.0, 1.0, 1.0),
}

# Evaluation and report settings
EVALUATION_CONFIG = {
    'n_points': 50,
}

REPORT_CONFIG = {
    'float_format': '.12e',
    'evaluation_header': ('x', 'f', 'f_ref', 'f1', 'f1_ref', 'f2', 'f2_ref', 'de_loss'),
    'trace_header': ('iter', 'loss_total', 'loss_de', 'loss_cs', 'loss_reg', 'grad_maxnorm',
                     'lr', 'active_nodes', 'circuits_cum', 'gates_cum', 'built_gates_cum'),
    'aggregate_header': ('seed', 'status', 'iterations', 'part1_iterations', 'part1_loss',
                         'loss_total', 'de_loss_eval', 'bc_loss_eval', 'circuits_cum', 'gates_cum'),
}

# Config-key suggestion settings
KEY_SUGGESTION_CONFIG = {
    'threshold': 0.6,
}

# Application metadata
APP_VERSION = '1.0'
APP_NAME = 'Lagrange VQA ODE Solver'
