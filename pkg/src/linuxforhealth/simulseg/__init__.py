"""
simulseg package

Root package for the LinuxForHealth simultaneous translation segmentation toolkit.
"""
from dotenv import load_dotenv

load_dotenv()

__version__ = "0.1.0"
