"""Build the optional compiled walk kernel.

The package works without it; ``eitwalk.backend`` falls back to the
pure-Python kernel when the extension cannot be imported.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("EITWALK_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "eitwalk._kernels",
                    ["src/eitwalk/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math: the compiled kernel must stay
                    # bit-identical to the Python fallback (no-builtin keeps gcc from
                    # fusing cos/sin into sincos, which can differ in the last bit)
                    extra_compile_args=["-O3", "-fno-fast-math", "-ffp-contract=off", "-fno-builtin"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
