"""Wall tension, circumferential strain and structural integrity maps."""

try:
    from rsii._rsii import *  # noqa: F401,F403  (installed package layout)
    from rsii._rsii import __version__  # noqa: F401
except ImportError:  # in-tree build: extension sits on PYTHONPATH
    from _rsii import *  # noqa: F401,F403
    from _rsii import __version__  # noqa: F401
