"""Tests for configure"""

import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from pyrsweep import configure
from pyrsweep.exceptions import ConfigurationError
from pyrsweep.settings import settings as global_settings


def test_configure_settings():
    """Test configure updates global settings"""
    original_workers = global_settings.workers
    original_logging = global_settings.logging_enabled
    original_dir = global_settings.log_dir

    try:
        configure(workers=4, logging_enabled=True, log_dir="/tmp/runs")
        assert global_settings.workers == 4
        assert global_settings.logging_enabled is True
        assert global_settings.log_dir == "/tmp/runs"

        configure(workers=2)
        assert global_settings.workers == 2
        assert global_settings.logging_enabled is True
    finally:
        global_settings.workers = original_workers
        global_settings.logging_enabled = original_logging
        global_settings.log_dir = original_dir


def test_configure_rejects_unknown_keys():
    """Test unknown settings raise instead of being created"""
    with pytest.raises(ConfigurationError):
        configure(lm="model")
    assert not hasattr(global_settings, "lm")
