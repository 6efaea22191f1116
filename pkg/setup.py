from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # build without the compiled core; the pure-Python kernels take over
    ext_modules = []
else:
    ext_modules = cythonize(
        Extension(
            "stefan_cascade._kernels",
            ["src/stefan_cascade/_kernels.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        ),
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
