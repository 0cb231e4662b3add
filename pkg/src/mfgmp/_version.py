# Single source of the package version; read by setup.py and recorded in run manifests.
__version__ = '0.1.0'
