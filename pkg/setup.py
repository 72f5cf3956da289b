from setuptools import setup, find_packages

setup(
    name="posematch",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    python_requires=">=3.8",
    install_requires=[
        "numpy",
        "scipy",
        "matplotlib",
        "pandas",
        "json5",
        "Pillow",
    ],
    extras_require={
        'test': ["pytest", "hypothesis"],
    },
    entry_points={
        'console_scripts': [
            'posematch=posematch.main:main',
        ],
    }
)
