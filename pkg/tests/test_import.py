"""Tests for the package surface"""

import os
import sys
import unittest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import pyrsweep


class TestImport(unittest.TestCase):
    """Test cases for package exports"""

    def test_all_names_resolve(self):
        """Test every name in __all__ is importable from the package"""
        for name in pyrsweep.__all__:
            self.assertTrue(hasattr(pyrsweep, name), f"missing export {name}")

    def test_version(self):
        """Test the package exposes a version string"""
        self.assertEqual(pyrsweep.__version__, "0.1.0")

    def test_main_entry_points(self):
        """Test the top-level operations are exported"""
        for name in ("infer_depth", "consistency_filter", "fuse", "cloud_metrics", "Dataset"):
            self.assertIn(name, pyrsweep.__all__)


if __name__ == "__main__":
    unittest.main()
