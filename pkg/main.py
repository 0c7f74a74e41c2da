import sys
import os

# add this directory to the path so that we can import the sde_taylor package
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from sde_taylor.cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
