import sys

from lfrunner.serve import main

sys.exit(main())
