#!/usr/bin/env python3
"""
Startup Check Script
Verifies the Python version, the installed packages and the bundled
configuration before a first run
"""

import importlib
import sys
from pathlib import Path
from typing import List

ROOT = Path(__file__).resolve().parent

# import name -> requirement name
REQUIRED_PACKAGES = {
    'numpy': 'numpy',
    'pandas': 'pandas',
    'sklearn': 'scikit-learn',
    'pydantic': 'pydantic',
    'plotly': 'plotly',
}

REQUIRED_FILES = [
    'core.py',
    'solver.py',
    'markets.py',
    'forecasting.py',
    'scheduler.py',
    'mpc.py',
    'simulator.py',
    'reporting.py',
    'config/bundled.json',
    'config/tariffs.json',
    'requirements.txt',
]


def check_python_version() -> bool:
    """Check Python version compatibility"""
    version = sys.version_info
    if version < (3, 9):
        print(f"❌ Python {version.major}.{version.minor} detected")
        print("⚠️  Python 3.9+ is required")
        return False

    print(f"✅ Python {version.major}.{version.minor}.{version.micro} - Compatible")
    return True


def check_dependencies() -> List[str]:
    """Return the requirement names of packages that cannot be imported"""
    missing_packages = []

    for module, requirement in REQUIRED_PACKAGES.items():
        try:
            importlib.import_module(module)
            print(f"✅ {requirement}")
        except ImportError:
            print(f"❌ {requirement} - Missing")
            missing_packages.append(requirement)

    return missing_packages


def check_files(root: Path = ROOT) -> List[str]:
    """Return the project files missing below ``root``"""
    missing_files = []

    for file_path in REQUIRED_FILES:
        if (root / file_path).exists():
            print(f"✅ {file_path}")
        else:
            print(f"❌ {file_path} - Missing")
            missing_files.append(file_path)

    return missing_files


def check_bundled_config(root: Path = ROOT) -> bool:
    """Parse the bundled configuration without running anything"""
    from config import load_config
    from errors import ConfigError

    try:
        config = load_config(root / 'config' / 'bundled.json')
    except ConfigError as e:
        print(f"❌ Bundled configuration invalid: {e}")
        return False
    print(f"✅ Bundled configuration for {config.forecast.target_date}")
    return True


def main():
    """Run startup checks"""
    print("🔍 Battery Toolkit - Startup Check")
    print("=" * 40)

    print("\n🐍 Checking Python version...")
    if not check_python_version():
        sys.exit(1)

    print("\n📁 Checking required files...")
    missing_files = check_files()
    if missing_files:
        print(f"\n❌ Missing files: {', '.join(missing_files)}")
        sys.exit(1)

    print("\n📦 Checking dependencies...")
    missing_packages = check_dependencies()
    if missing_packages:
        print(f"\n❌ Missing packages: {', '.join(missing_packages)}")
        print("Install with: pip install -r requirements.txt")
        sys.exit(1)

    print("\n🧪 Checking bundled configuration...")
    if not check_bundled_config():
        sys.exit(2)

    print("\n🚀 System ready! You can now run:")
    print("   python quick_start.py")
    print("\n" + "=" * 40)


if __name__ == "__main__":
    main()
