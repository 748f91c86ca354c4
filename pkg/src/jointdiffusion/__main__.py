from jointdiffusion.cli import main

raise SystemExit(main())
