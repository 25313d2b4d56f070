import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CODEMIX_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "codemix.kernels._core",
                    ["src/codemix/kernels/_core.pyx"],
                    optional=True,
                )
            ],
            language_level=3,
        )
    except ImportError:
        # no Cython available: install runs with the pure backend only
        ext_modules = []

setup(ext_modules=ext_modules)
