"""Writing transport paths to disk for inspection"""

from pathlib import Path
from typing import Union

from shared.transport.flow import TransportPath
from shared.utils.arrays import write_csv, write_pgm16, write_raw
from shared.utils.logging import get_logger

logger = get_logger(__name__)


def export_path(path: TransportPath, directory: Union[str, Path]) -> Path:
    """state_XX.bin / state_XX.pgm per state plus step_costs.csv"""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    scaling = []
    for i, state in enumerate(path.states):
        write_raw(root / f"state_{i:02d}.bin", state.data)
        lo, hi = write_pgm16(root / f"state_{i:02d}.pgm", state.data)
        scaling.append((i, lo, hi))
    write_csv(root / "step_costs.csv", ["step", "l1_residual"], enumerate(path.step_costs))
    write_csv(root / "pgm_scaling.csv", ["state", "min", "max"], scaling)
    logger.info("exported transport path", directory=str(root), states=len(path.states))
    return root
