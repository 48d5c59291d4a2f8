from __future__ import annotations

if __name__ == "__main__":
    from neural_tomography._cli import main

    raise SystemExit(main())
