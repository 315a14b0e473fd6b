"""Build the optional compiled simulator.

Set ``DIVIDEND_EQ_PORTABLE=1`` to drop ``-march=native``.  If the extension
fails to build the package still installs and uses the numpy fallback.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # build without the extension
    ext_modules = []
else:
    flags = ["-O3", "-ffast-math", "-std=c99"]
    if os.environ.get("DIVIDEND_EQ_PORTABLE") != "1":
        flags += ["-march=native", "-mprefer-vector-width=512"]
    ext_modules = cythonize(
        [
            Extension(
                "dividend_eq.mc._kernel",
                ["src/dividend_eq/mc/_kernel.pyx", "src/dividend_eq/mc/mc_kernel.c"],
                include_dirs=["src/dividend_eq/mc", numpy.get_include()],
                extra_compile_args=flags,
                libraries=["m"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled simulator not built ({exc}); using the numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: {ext.name} not built ({exc}); using the numpy fallback")


setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
