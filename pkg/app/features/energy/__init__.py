"""Energy Feature"""
