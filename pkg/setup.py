import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "fgfpca._kernels._agq_cy",
                ["src/fgfpca/_kernels/_agq_cy.pyx"],
                include_dirs=[numpy.get_include()],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    # no Cython: the pure-python kernel is used at runtime
    extensions = []

setup(ext_modules=extensions)
