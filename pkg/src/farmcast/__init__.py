"""Farm power forecast-error analysis.

Train regularized linear, kernel, neural and tree-ensemble regressors on
wind and PV farm time series with weather-forecast features, assemble
out-of-sample squared errors over rolling test windows, and compare the
resulting error distributions across data coverage, hour, season, terrain
and model family with gamma fits, KL divergence and Kruskal-Wallis tests.
"""

__version__ = "0.1.0"
