"""Orienteering with stochastic and dynamic release dates."""
