import sys

from hiergraph.cli import main

sys.exit(main())
