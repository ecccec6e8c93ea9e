"""Criticality toolkit for discrete Schroedinger forms on weighted graphs.

The heavy lifting happens in the compiled ``_critkit`` extension; this module
re-exports it and adds a couple of conveniences for JSON reports.
"""

import json as _json

from ._critkit import *  # noqa: F401,F403
from ._critkit import CritkitError, __version__, run as _run


def run_job(command, **options):
    """Run a CLI job in process and return ``(exit_code, report_dict, csv_table)``."""
    code, report, table = _run(command, options)
    return code, _json.loads(report), table


__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
