"""Build the optional compiled kernels; the package works without them."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("ROTHE_WAVELET_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
        import numpy
    except ImportError:
        pass
    else:
        from setuptools import Extension
        ext_modules = cythonize(
            [Extension("rothe_wavelet._kernels", ["src/rothe_wavelet/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
