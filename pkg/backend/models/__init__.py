"""Imputation, combining rules, exact moments and the Monte Carlo harness"""
