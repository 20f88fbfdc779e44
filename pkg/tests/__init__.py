"""Tests package for the federated learning Byzantine simulator"""
