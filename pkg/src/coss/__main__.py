import sys

from coss.cli import main

sys.exit(main())
