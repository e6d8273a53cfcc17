"""Process-wide worker count for FFTs.

The transforms are bitwise reproducible for any worker count, so this only
affects speed.
"""
import os

_workers = None


def workers():
    if _workers is not None:
        return _workers
    env = os.environ.get("ALPHA_DYNAMO_THREADS")
    return int(env) if env else 1


def set_workers(n):
    global _workers
    _workers = None if n is None else max(1, int(n))
