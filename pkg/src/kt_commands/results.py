"""
Result dicts returned by the command executors
"""
import logging
from typing import Any, Dict

from kt_errors import SlamFmError


def success(**data) -> Dict[str, Any]:
    return {"success": True, "data": data}


def failure(logger: logging.Logger, error: Exception) -> Dict[str, Any]:
    """Log and wrap an error; errors outside the pipeline hierarchy are reported under 'cli'"""
    module = error.module if isinstance(error, SlamFmError) else "cli"
    logger.error(f"Error in {module}: {error}")
    return {
        "success": False,
        "error": str(error),
        "module": module,
        "error_type": type(error).__name__,
    }
