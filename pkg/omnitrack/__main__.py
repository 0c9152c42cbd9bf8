import sys

from omnitrack.cli import main

sys.exit(main())
