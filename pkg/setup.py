from setuptools import setup, find_packages

setup(
    name="pistonlab",
    version="0.1",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=["numpy", "scipy", "mpmath", "python-dotenv"],
    entry_points={"console_scripts": ["pistonlab = pistonlab.cli:main"]},
)
