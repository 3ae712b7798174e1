import sys

from gsitlab.harness.cli import main

sys.exit(main())
