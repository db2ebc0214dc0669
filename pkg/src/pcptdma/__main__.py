import sys

from .expcli import main

sys.exit(main())
