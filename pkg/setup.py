import setuptools


with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="seriesforge",
    author="SeriesForge developers",
    description="Adversarial synthesis of multivariate time series with autoencoder-space discriminators",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["tests*"]),
    package_data={"seriesforge": ["py.typed"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache Software License",
    ],
    keywords=["gan", "time-series", "synthetic-data", "autoencoder"],
    install_requires=[
        "six",
        "numpy>=1.17",
        "pandas>=1.5",
        "protobuf>=3.20.0",
    ],
    entry_points={"console_scripts": ["seriesforge=seriesforge.cli:main"]},
    python_requires=">=3.7",
    setup_requires=["setuptools_scm"],
    use_scm_version={"write_to": "seriesforge/__version.py"},
)
