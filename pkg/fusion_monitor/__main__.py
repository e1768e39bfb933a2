from fusion_monitor.cli import main

raise SystemExit(main())
