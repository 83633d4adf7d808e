"""Tests for itergraph package."""
