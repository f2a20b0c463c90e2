from hkdyn.cli import main

raise SystemExit(main())
