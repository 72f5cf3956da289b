import sys
import os

# Add the current directory to Python's path
sys.path.insert(0, os.path.abspath('.'))

# Import and run the main function
from posematch.main import main

if __name__ == "__main__":
    sys.exit(main())
