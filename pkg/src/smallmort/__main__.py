import sys

from smallmort.cli import main

sys.exit(main())
