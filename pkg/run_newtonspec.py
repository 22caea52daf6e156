#!/usr/bin/env python3
"""
Run newtonspec from the command line

Usage:
    python run_newtonspec.py verify --surface sphere:1 --r 0 --level 3 [-v]
    python run_newtonspec.py converge --surface sphere:1 --levels 1..4
    python run_newtonspec.py spectrum --surface cliffordtorus --c 1 --eigs 6
    python run_newtonspec.py identities --surface ellipsoid:1,1,1,1.3 --r 2 --random 1000
"""

import sys

from newtonspec_cli import main

if __name__ == '__main__':
    sys.exit(main())
