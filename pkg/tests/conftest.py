import sys
from pathlib import Path

# Make sibling helper modules (naive_oracle, rand_sql) importable.
sys.path.insert(0, str(Path(__file__).parent))
