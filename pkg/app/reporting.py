"""
CSV and JSON writers for command output.

Every file embeds the toolkit name, version and the fully resolved run
configuration, so the data section can be regenerated from the file alone.
"""

import csv
import io
import json
import logging
import math
import sys
from typing import Any, Dict, List, Optional, Sequence

from app import TOOLKIT_NAME, __version__
from app.config import Config
from app.models import OutputFormat, RunConfig

logger = logging.getLogger(__name__)


def round_significant(value: Any, digits: int = Config.SIGNIFICANT_DIGITS) -> Any:
    """Round floats (also inside lists and dicts) to `digits` significant digits."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}")
    if isinstance(value, dict):
        return {k: round_significant(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_significant(v, digits) for v in value]
    if hasattr(value, "item"):
        return round_significant(value.item(), digits)
    return value


def format_cell(value: Any, digits: int = Config.SIGNIFICANT_DIGITS) -> str:
    value = round_significant(value, digits)
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def config_echo(run_config: RunConfig) -> Dict:
    return run_config.model_dump(mode="json", by_alias=True)


def render_csv(columns: Sequence[str], rows: List[Dict], run_config: RunConfig, notes: Sequence[str] = ()) -> str:
    buffer = io.StringIO()
    buffer.write(f"# toolkit={TOOLKIT_NAME}\n")
    buffer.write(f"# version={__version__}\n")
    buffer.write(f"# config={json.dumps(config_echo(run_config), sort_keys=True)}\n")
    for note in notes:
        buffer.write(f"# note={note}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def render_json(command: str, data: Any, run_config: RunConfig, notes: Sequence[str] = ()) -> str:
    document = {
        "toolkit": TOOLKIT_NAME,
        "version": __version__,
        "command": command,
        "config": config_echo(run_config),
        "notes": list(notes),
        "data": round_significant(data),
    }
    return json.dumps(document, indent=2) + "\n"


def write_output(
    run_config: RunConfig,
    columns: Sequence[str],
    rows: List[Dict],
    data: Optional[Any] = None,
    notes: Sequence[str] = (),
) -> str:
    """
    Render rows in the configured format and write them to run_config.out or stdout.

    Args:
        run_config: Resolved configuration, echoed into the output
        columns: CSV column order
        rows: One dict per table row
        data: JSON data section; defaults to the rows
        notes: Free-text notes carried in both formats

    Returns:
        The rendered text
    """
    if run_config.output_format == OutputFormat.CSV:
        text = render_csv(columns, rows, run_config, notes)
    else:
        text = render_json(run_config.command, rows if data is None else data, run_config, notes)
    if run_config.out:
        with open(run_config.out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        logger.info(f"Wrote {len(rows)} rows to {run_config.out}")
    else:
        sys.stdout.write(text)
    return text
