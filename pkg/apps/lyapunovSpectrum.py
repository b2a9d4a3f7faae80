#!/usr/bin/env python
"""
Lyapunov spectra of random or trained recurrent networks from the
command line. Run with --help for the subcommands.
"""

import sys

from lyaputils.cli import main

if __name__ == '__main__':
    sys.exit(main())
