import sys

from gasketsim.cli import main

sys.exit(main())
