"""Tests for syn2real."""
