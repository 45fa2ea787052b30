"""
Command-line launcher for the surgvision toolkit.

Usage: python main.py <command> [options] --output DIR
"""

import sys

from src.cli import dispatch


def main():
    """Main function."""
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
