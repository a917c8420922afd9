import sys

from rftwosample.cli import main

sys.exit(main())
