import sys

from backend_adapter.adapter import main

sys.exit(main())
