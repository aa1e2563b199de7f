"""Build the optional compiled kernels; the package works without them."""
import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernel not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback")


def extensions():
    if os.environ.get("COOPCBF_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "coopcbf.qp._dual_ext",
        ["src/coopcbf/qp/_dual_ext.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    barrier = Extension(
        "coopcbf._barrier_ext",
        ["src/coopcbf/_barrier_ext.pyx"],
        extra_compile_args=["-O3"],
    )
    plant = Extension(
        "coopcbf._srb_ext",
        ["src/coopcbf/_srb_ext.pyx"],
        extra_compile_args=["-O3"],
    )
    try:
        return cythonize([ext, barrier, plant], compiler_directives={"language_level": "3"}, quiet=True)
    except Exception as exc:  # noqa: BLE001
        print(f"warning: cythonize failed ({exc}); using numpy fallback")
        return []

setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
