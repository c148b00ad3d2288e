"""Pathwise simulation of monotone SPDEs with additive and linear multiplicative noise."""
