import sys

from affine_fence.main import main

sys.exit(main())
