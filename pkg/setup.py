from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off: the compiled kernels must produce bit-identical doubles
# to the pure-Python fallback, so FMA contraction has to stay disabled.
extensions = [
    Extension(
        "mmrf._kernels._ckern",
        ["src/mmrf/_kernels/_ckern.pyx"],
        extra_compile_args=["-O2", "-ffp-contract=off"],
    ),
]

setup(ext_modules=cythonize(extensions, language_level="3"))
