"""Stationary Regime Lab"""
