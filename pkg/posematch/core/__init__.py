# core/__init__.py
"""
Data model, exceptions and caching shared by every posematch module
"""
