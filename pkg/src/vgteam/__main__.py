import sys

from vgteam.cli import main

sys.exit(main())
