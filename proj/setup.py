"""Build the pybind11 module through the project's CMake tree.

setuptools drives the packaging; CMake owns the actual compile so the python
module always links the same core library the CLI and tests use.
"""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        source_dir = Path(__file__).parent.resolve()
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        subprocess.run(
            [
                "cmake",
                "-S",
                str(source_dir),
                "-B",
                str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DMIXOPT_BUILD_TESTS=OFF",
                "-DMIXOPT_BUILD_PYTHON=ON",
                f"-DPython3_EXECUTABLE={sys.executable}",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "mixopt_py", "-j"],
            check=True,
        )

        built = sorted((build_dir / "python" / "mixopt").glob("_core.*"))
        if not built:
            raise RuntimeError("cmake did not produce the _core extension")
        dest = Path(self.get_ext_fullpath(ext.name)).resolve()
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built[-1], dest)


setup(
    packages=["mixopt"],
    package_dir={"": "python"},
    ext_modules=[CMakeExtension("mixopt._core")],
    cmdclass={"build_ext": CMakeBuild},
    zip_safe=False,
)
