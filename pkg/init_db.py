"""Initialize the run registry with tables."""
import argparse
from pathlib import Path

from sgsynth.database import make_engine, registry_url


def main():
    """Create all registry tables."""
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output-dir", type=Path, default=Path("runs/default"))
    parser.add_argument("--url", help="SQLAlchemy URL (overrides --output-dir)")
    args = parser.parse_args()

    url = registry_url(args.output_dir, args.url)
    print(f"Creating registry tables at {url}...")
    make_engine(url).dispose()
    print("Registry initialized successfully!")


if __name__ == "__main__":
    main()
