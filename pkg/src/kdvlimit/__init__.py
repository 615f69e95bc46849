"""
kdvlimit - pseudospectral workbench for the inviscid limit of KdV-Burgers and mKdV-Burgers
"""
try:
    from importlib.metadata import version
    __version__ = version("kdvlimit")
except Exception:
    __version__ = "dev"
