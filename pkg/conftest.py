import sys
import os

# Add the project root directory to sys.path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
