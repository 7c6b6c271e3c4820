"""Allow ``python -m softcache``."""

import sys

from .cli import main

sys.exit(main())
