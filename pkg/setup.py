from setuptools import Extension, setup

# The compiled tape evaluator is optional: when Cython (or a C compiler) is
# unavailable the package falls back to the pure NumPy executor at import.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("gradcert._tape", ["src/gradcert/_tape.pyx"])],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
