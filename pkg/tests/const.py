from pathlib import Path

THIS_DIR = Path(__file__).parent
DATA_DIR = THIS_DIR / "data"
CONFIG_DIR = DATA_DIR / "configs"
INVALID_CONFIG_DIR = DATA_DIR / "invalid"
PROJECT_ROOT = THIS_DIR.parent

LORENZ_IC = (0.0, 1.0, 1.05)
ROSSLER_IC = (2.0, 1.0, 5.0)
VDP_IC = (-4.0, 5.0)

PERIOD_EIGENVALUES = (0.3, -0.2, 0.5)
NOISE_VARIANCE = 0.25

MINIMAL_CONFIG = """{
  "kind": "reconstruct",
  "name": "minimal",
  "system": "vanderpol",
  "initial_condition": [-4.0, 5.0],
  "total_time": 6.0,
  "washout_time": 3.0,
  "reservoir": {"n": 5, "seed": 3},
  "pca_components": 2
}
"""
