import os
from setuptools import setup


def read(fname):
    try:
        return open(os.path.join(os.path.dirname(__file__), fname)).read()
    except FileNotFoundError:
        return ""


setup(
    name="ncbmo_torch",
    version="0.1.0",
    description=(
        "Noncommutative martingale BMO norms and John-Nirenberg checks for Torch"
    ),
    license="MIT",
    packages=["ncbmo_torch", "ncbmo_torch.extras"],
    install_requires=[
        "torch",
        "tensorboard",
        "numpy",
        "scipy",
        "tqdm",
    ],
    entry_points={"console_scripts": ["ncbmo=ncbmo_torch.cli:main"]},
    test_suite="tests",
    long_description=read("README.md"),
)
