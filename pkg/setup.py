import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "occufluct._evolve_core",
    ["src/occufluct/_evolve_core.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
)

setup(ext_modules=cythonize([ext], language_level=3))
