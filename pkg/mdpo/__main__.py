import sys

from mdpo.cli import main

sys.exit(main())
