"""
Utility functions for writing trajectories and chain reports.
"""

import json
import logging
import os
from typing import Any, Dict, Optional

import pandas as pd

from srusk.integrator import Trajectory

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

# 17 significant digits round-trip every double.
FLOAT_FORMAT = "%.17g"


def _ensure_directory(filename: str) -> None:
    output_dir = os.path.dirname(os.path.abspath(filename))
    if output_dir and not os.path.exists(output_dir):
        os.makedirs(output_dir)


def trajectory_to_csv(trajectory: Trajectory) -> str:
    """CSV text of a trajectory with the t, q*, v*, p*, diagnostics header."""
    df: pd.DataFrame = trajectory.to_frame()
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def export_trajectory_csv(trajectory: Trajectory, filename: Optional[str] = None) -> Optional[str]:
    """
    Export a trajectory to a CSV file or print it to the console.

    Args:
        trajectory: Trajectory to export
        filename: Output filename (if None, prints to console)

    Returns:
        Path to the saved file if filename is provided, None otherwise
    """
    text = trajectory_to_csv(trajectory)
    if not filename:
        print(text, end="")
        return None

    _ensure_directory(filename)
    with open(filename, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.info(f"Trajectory saved to {filename}")
    return filename


def export_chain_report(report: Dict[str, Any], filename: Optional[str] = None) -> Optional[str]:
    """
    Export a chain report as JSON.

    Args:
        report: JSON-ready report (see ``ConstraintChain.to_report``)
        filename: Output filename (if None, prints to console)

    Returns:
        Path to the saved file if filename is provided, None otherwise
    """
    text = json.dumps(report, indent=2, sort_keys=True)
    if not filename:
        print(text)
        return None

    _ensure_directory(filename)
    with open(filename, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    logger.info(f"Chain report saved to {filename}")
    return filename
