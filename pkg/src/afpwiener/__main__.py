import sys

from afpwiener.cli import main

sys.exit(main())
