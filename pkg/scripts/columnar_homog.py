#!/usr/bin/env python

"""
Numerical homogenization of high-contrast columnar composites in a magnetic
field: cell problems, contrast sweeps, closed-form limits and 3D validation
"""

import sys

from columnar_homog.cli import main


if __name__ == '__main__':
    sys.exit(main())
