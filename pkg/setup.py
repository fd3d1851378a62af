from Cython.Build import cythonize
from setuptools import Extension, setup

# FMA contraction off so the compiled and pure-Python kernels agree bit for bit.
ext = Extension(
    "bistate._kernels",
    ["src/bistate/_kernels.pyx"],
    extra_compile_args=["-O2", "-ffp-contract=off"],
)

setup(ext_modules=cythonize([ext], language_level=3))
