"""INDM command-line interface.

This module provides the command-line interface for training, sampling and
evaluating models with the INDM core.
"""

import os

from indm_core.utils.helpers import apply_thread_limit

# must run before numpy is imported: BLAS sizes its pool at load time
_threads = os.environ.get("INDM_THREADS", "").strip()
if _threads.isdigit():
    apply_thread_limit(int(_threads))
