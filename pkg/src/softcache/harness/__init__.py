"""Experiment driver: configs, sweeps, result tables and gain reports."""

from .config import *  # noqa: F401,F403
from .config import __all__ as _config_all
from .report import *  # noqa: F401,F403
from .report import __all__ as _report_all
from .runner import *  # noqa: F401,F403
from .runner import __all__ as _runner_all

__all__ = _config_all + _runner_all + _report_all
