from lisg.cli import main

raise SystemExit(main())
