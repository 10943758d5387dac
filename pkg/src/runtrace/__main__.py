import sys

from runtrace.cli import main

sys.exit(main())
