#!/usr/bin/env python3

import os
import runpy
import sys

# The package uses relative imports, so run it as src.main from the project root
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

if __name__ == "__main__":
    runpy.run_module('src.main', run_name='__main__')
