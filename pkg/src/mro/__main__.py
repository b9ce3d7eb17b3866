import sys

from mro.cli import main

sys.exit(main())
