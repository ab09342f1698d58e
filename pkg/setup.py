import os

from setuptools import setup

# The compiled kernel is optional: the package falls back to the pure-numpy
# implementation when the extension is absent or fails to build.
ext_modules = []
if os.environ.get("POLYMAG_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "polymag._kernels",
                    ["src/polymag/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "initializedcheck": False,
                "cdivision": True,
            },
        )
    except Exception as exc:  # pragma: no cover - build-environment dependent
        print(f"polymag: building without compiled kernels ({exc})")
        ext_modules = []

setup(ext_modules=ext_modules)
