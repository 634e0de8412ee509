from setuptools import find_packages, setup

setup(
    name="tape_audit",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "examples*"]),
    install_requires=[
        "jsonschema",
        "python-dotenv",
        "numpy",
        "pandas",
        "logger_tt",
        "typing_extensions; python_version < \"3.11\"",
    ],
    extras_require={"test": ["pytest"]},
    entry_points={
        "console_scripts": [
            "tape-audit = src.main:run",
        ],
    },
    python_requires=">=3.10",
)
