"""Core application configuration and settings."""
