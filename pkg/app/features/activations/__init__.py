"""Activations Feature"""
