"""
Entry point for running kdvlimit as a module
Usage: python -m kdvlimit
"""
from .cli import main

if __name__ == "__main__":
    main()
