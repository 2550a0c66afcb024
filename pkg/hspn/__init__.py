# -*- coding: utf-8 -*-

"""Top-level package for HSPN, hierarchical shape perception from incomplete slice images."""

__author__ = """hspn developers"""
__version__ = '0.1.0'
