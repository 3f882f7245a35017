"""Supermixer Feature"""
