from setuptools import setup, find_packages

setup(
    name="SymmFlow",
    version="0.1.0",
    packages=find_packages(exclude=("tests", "examples", "examples.*")),
    py_modules=["symmflow"],
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "matplotlib>=3.7",
        "pydantic>=2.0",
        "tenacity>=8.0",
        "python-dotenv>=1.0",
    ],
    entry_points={"console_scripts": ["symmflow = cli.main:run"]},
)
