import os
import sys

import setuptools

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from doeflow import __version__  # noqa: E402

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="doeflow",
    version=__version__,
    author="doeflow contributors",
    description=(
        "Design of experiments for holistic testing: specifications, designs, run orchestration "
        "and analysis"
    ),
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),
    package_data={"doeflow": ["data/*.json"]},
    keywords=[
        "design of experiments",
        "factorial design",
        "latin hypercube",
        "sobol sequence",
        "anova",
        "regression",
        "screening",
        "experiment orchestration",
        "power systems testing",
        "fault ride-through",
    ],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.7",
        "Programming Language :: Python :: 3.8",
        "Topic :: Scientific/Engineering",
        "Typing :: Typed",
    ],
    python_requires=">=3.7",
    install_requires=[
        "allennlp>=1.1.0, <2.11.0",
        "numpy",
        "typer>=0.3.2",
        "validators>=0.18.2",
    ],
    extras_require={
        "dev": [
            "black",
            "coverage",
            "codecov",
            "flake8",
            "hypothesis",
            "pytest",
            "pytest-cov",
            "mypy",
            "scipy",
        ]
    },
    entry_points={"console_scripts": ["doeflow=doeflow.cli:app"]},
)
