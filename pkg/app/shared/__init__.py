# Shared domain models and utilities

