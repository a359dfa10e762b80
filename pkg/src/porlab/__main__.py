import sys

from porlab.cli import main

sys.exit(main())
