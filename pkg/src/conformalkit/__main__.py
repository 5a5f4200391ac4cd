import sys

from conformalkit.cli.main import main

sys.exit(main())
