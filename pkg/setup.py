import setuptools
import re, io

with open("README.md", "r") as fh:
    long_description = fh.read()

# get version from package's __version__
__version__ = re.search(
        r'__version__\s*=\s*[\'"]([^\'"]*)[\'"]',
        io.open('carlemanlab/__init__.py', encoding='utf_8_sig').read()
    ).group(1)

setuptools.setup(
    name="carlemanlab",
    version=__version__,
    description="Grid checks of Carleman estimates and Cauchy/inverse source stability for linearized Navier-Stokes",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=["carlemanlab"],
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.12",
    ],
    entry_points={
        "console_scripts": ["carlemanlab=carlemanlab.cli:main"],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Scientific/Engineering :: Physics"
    ],
    python_requires='>=3.9',
)
