from setuptools import setup
from setuptools import find_packages

with open('requirements.txt') as reqs:
    install_requires = [
        line for line in reqs.read().split('\n')
        if (line and not line.startswith('--')) and (";" not in line)]

with open("README.md") as f:
    long_description = f.read()

#Version "0.0.0" will be replaced by CI when releasing
setup(
    name='polarthru',
    version="0.0.0",
    license="BSD 3",
    python_requires='>=3.8',
    description="throughput-maximizing multilevel polar coded modulation with HARQ",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests"]),
    install_requires=install_requires,
    extras_require={
        "plot": ["matplotlib"],
    },
    entry_points={
        "console_scripts": [
            "polarthru = polarthru.cli:main",
        ]
    }
)
