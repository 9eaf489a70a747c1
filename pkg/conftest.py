# Keeps the repository root on sys.path so tests import the package as `src`.
