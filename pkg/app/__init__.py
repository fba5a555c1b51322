__version__ = "1.0.0"
TOOLKIT_NAME = "bsc-qoe-toolkit"
