import os
import sys

# ctest points this at the freshly built in-tree package so that a stale
# editable install cannot shadow it.
_pkg_dir = os.environ.get("SPONGELAB_PKG_DIR")
if _pkg_dir:
    sys.meta_path[:] = [f for f in sys.meta_path if "ScikitBuild" not in type(f).__name__]
    sys.path.insert(0, _pkg_dir)
    for name in [m for m in sys.modules if m == "spongelab" or m.startswith("spongelab.")]:
        del sys.modules[name]
