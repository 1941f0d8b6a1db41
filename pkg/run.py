#!/usr/bin/env python3
"""
Startup script for QuenchLab
"""

import sys
from pathlib import Path

# Add src directory to Python path
src_path = Path(__file__).parent / 'src'
sys.path.append(str(src_path))

try:
    from src.main import cli
except ImportError as e:
    print(f"Error importing required modules: {e}")
    print("\nPlease ensure all dependencies are installed:")
    print("pip install -r requirements.txt")
    sys.exit(1)


def main():
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
