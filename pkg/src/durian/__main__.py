import sys

from durian.cli import main

sys.exit(main())
