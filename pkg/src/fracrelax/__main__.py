import sys

from fracrelax.cli import main

sys.exit(main())
