"""Workbench Feature"""
