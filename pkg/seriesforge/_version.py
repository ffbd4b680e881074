def get_version():
    # type: () -> str
    """Return the package version.

    The write_to functionality of setuptools_scm is used (see setup.py)
    to output the version to seriesforge/__version.py which we attempt to import.

    Falls back to the installed distribution metadata.
    """
    try:
        from .__version import version

        return version
    except ImportError:
        try:
            from importlib.metadata import version as distribution_version
        except ImportError:  # Python < 3.8
            import pkg_resources

            return pkg_resources.get_distribution("seriesforge").version
        return distribution_version("seriesforge")
