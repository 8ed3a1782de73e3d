# -*- coding: utf-8 -*-
"""
covfactor
src package initializer
"""
