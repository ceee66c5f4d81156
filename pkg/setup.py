import os

from setuptools import find_packages, setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()


def read_requirements(filename):
    """Read requirements from a file."""
    with open(os.path.join("requirements", filename), "r", encoding="utf-8") as f:
        return [
            line.strip()
            for line in f
            if line.strip() and not line.startswith("-r") and not line.startswith("#")
        ]


# Get requirements from files
install_requires = read_requirements("base.txt")
dev_requires = read_requirements("development.txt")
test_requires = read_requirements("testing.txt")

# Remove base requirements from other requires to avoid duplication
dev_requires = [req for req in dev_requires if req not in install_requires]
test_requires = [req for req in test_requires if req not in install_requires]

extras_require = {
    "dev": dev_requires,
    "test": test_requires,
    "all": dev_requires + test_requires,
}

setup(
    name="indm-toolkit",
    version="0.1.0",
    description=(
        "Implicit nonlinear diffusion models on 2D data: training, sampling, "
        "likelihoods and diagnostics"
    ),
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.9",
    install_requires=install_requires,
    entry_points={
        "console_scripts": ["indm=indm_cli.main:main"],
    },
    extras_require=extras_require,
    include_package_data=True,
    zip_safe=False,
)
