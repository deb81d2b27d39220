"""Builds the compiled extension for pip installs.

The cmake build remains the primary path (it also produces the CLI and the
test binaries); this file exists so `pip install .` works standalone. The
extension compiles the full library plus the bindings in one unit.
"""

from glob import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

setup(
    ext_modules=[
        Pybind11Extension(
            "sgelab._sgelab",
            sorted(glob("src/*.cpp")) + ["python/bindings.cpp"],
            include_dirs=["include", "vendor"],
            cxx_std=20,
        )
    ],
    cmdclass={"build_ext": build_ext},
)
