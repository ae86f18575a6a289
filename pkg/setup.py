from setuptools import setup, find_packages

setup(
    name="conformgreen",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    version="0.1.0",
    license="LGPLv3+",
    author="The conformgreen developers",
    description="Neumann Green and Robin functions of conformal metrics on planar domains",
    keywords="Green function Robin function Neumann problem finite elements conformal metric",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    python_requires=">=3.8",
    include_package_data=True,
    zip_safe=True,
    install_requires=["click>=8.0", "numpy>=1.20", "scipy>=1.7", "pyyaml>=5.1"],
    extras_require={
        "doc": ["Sphinx"],
        "tests": ["pytest", "hypothesis"],
    },
    entry_points="""
        [console_scripts]
        conformgreen=conformgreen.cli:main
    """,
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "License :: OSI Approved :: GNU Lesser General Public License v3 or later (LGPLv3+)",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
