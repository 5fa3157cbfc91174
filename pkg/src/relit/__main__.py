import sys

from relit.cli import main

sys.exit(main())
