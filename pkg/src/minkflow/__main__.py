import sys

from minkflow.cli import main

sys.exit(main())
