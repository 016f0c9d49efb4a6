"""
Built-in defaults. Scenario files override these and CLI flags override scenario files.
"""
import os
from pathlib import Path

# power flow
PF_TOLERANCE = 1e-8
PF_MAX_ITERATIONS = 100

# sensitivity oracle
FD_EPSILON = 1e-4
FD_TOLERANCE = 1e-12

# centralized reference solver
CENTRAL_TOLERANCE = 1e-8
CENTRAL_MAX_ITERATIONS = 100_000

# case-study limits and weights
V_MIN_PU = 0.95
V_MAX_PU = 1.05
V_NOM_PU = 1.0
C_Q = 1.0
C_P = 4.0
POWER_FACTOR = 0.85

# timing (ms)
GOSSIP_TICK_MS = 100
LATENCY_MS = 100
LAMBDA_UPDATE_PERIOD_MS = 1000
PROFILE_STEP_MS = 1000
SAMPLE_PERIOD_MS = 1000

DROP_PROBABILITY = 0.0
GOSSIP_MODE = "push_pull"
TOPOLOGY = "complete"
SEED = 0

OUTPUT_DIR_ENV = "P2PVC_OUTPUT_DIR"

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def default_output_dir() -> Path:
    """
    Directory used for output files when no explicit path is given.

    Returns:
    - Path: ``$P2PVC_OUTPUT_DIR`` when set, else the current working directory.
    """
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def bundled(name: str) -> Path:
    """
    Path of a file shipped in ``P2PVC/data``.

    Parameters:
    - name (str): File name, e.g. ``case_study_scenario.json``.

    Returns:
    - Path: Absolute path to the bundled file.
    """
    return DATA_DIR / name
