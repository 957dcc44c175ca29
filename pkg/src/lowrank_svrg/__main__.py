import sys

from lowrank_svrg.harness.cli import main

sys.exit(main())
