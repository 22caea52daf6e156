#!/usr/bin/env python3
"""
Run newtonspec Web Server

Usage:
    python run_newtonspec_web.py [--host HOST] [--port PORT] [--debug]
"""

from newtonspec_web_server import main

if __name__ == '__main__':
    main()
