import os
import re

from setuptools import setup, find_packages


def get_version():
    here = os.path.dirname(os.path.abspath(__file__))
    with open(os.path.join(here, 'src', 'mfgmp', '_version.py'), encoding='utf8') as f:
        match = re.search(r"^__version__ = '([^']+)'", f.read(), re.M)
    if match is None:
        raise RuntimeError('unable to find version string')
    return match.group(1)


console_scripts = [
    'mfgmp = mfgmp.cli.main:entry_point',
]

CLASSIFIERS = [
    "Development Status :: 4 - Beta",
    "Intended Audience :: Science/Research",
    "License :: OSI Approved :: MIT License",
    "Operating System :: POSIX",
    "Programming Language :: Python",
    "Programming Language :: Python :: 3",
    "Topic :: Scientific/Engineering :: Mathematics",
]

INSTALL_REQUIRES = [
    "numpy >= 1.20",
    "scipy >= 1.4",
    "h5py >= 2.10",
    "pyyaml >= 5.1",
    "blessings",
]

EXTRAS_REQUIRE = {"tests": ["pytest", "pytest-cov"]}

EXTRAS_REQUIRE["dev"] = EXTRAS_REQUIRE["tests"] + ["pre-commit"]


metadata = dict(
    name='mfgmp',
    license='MIT',
    description='Numerical solvers for mean field games with a major player',
    long_description=open('README.rst', encoding='utf8').read(),
    version=get_version(),
    keywords='mean field games, master equation, optimal stopping, obstacle problem',
    python_requires=">=3.7",
    zip_safe=False,
    classifiers=CLASSIFIERS,
    entry_points={'console_scripts': console_scripts},
    install_requires=INSTALL_REQUIRES,
    extras_require=EXTRAS_REQUIRE,
    package_data={},
    packages=find_packages(where='src'),
    package_dir={"": "src"},
)


if __name__ == '__main__':
    setup(**metadata)
