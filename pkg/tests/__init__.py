"""Tests for logit_parcellation."""
