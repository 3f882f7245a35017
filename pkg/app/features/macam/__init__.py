"""MACAM Feature"""
