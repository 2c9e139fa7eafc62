#!/usr/bin/env python3
"""
Main entry point for the slam-fm knowledge tracing CLI
"""
import sys
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from slamfm_cli import run

def main():
    """Main entry point"""
    try:
        sys.exit(run(sys.argv[1:]))
    except KeyboardInterrupt:
        print("Interrupted")
        sys.exit(1)

if __name__ == "__main__":
    main()
