"""
Entry point: python main.py <run|sweep|ekf|fusvaf|consensus|validate> ...
"""
from fusion_monitor.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
