"""Shared test fixtures and dataset builders."""
