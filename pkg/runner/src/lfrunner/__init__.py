"""Runner for script-form labeling functions.

Loads a user script, resolves its labeling entrypoint, and serves documents
over the engine's line-delimited JSON protocol on stdin/stdout.
"""

from lfrunner.serve import main, serve

__version__ = "0.1.0"

__all__ = ["main", "serve", "__version__"]
