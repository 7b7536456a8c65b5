"""
Measured operating points of a 10 GBd five-subcarrier link, used to
calibrate the free model constants and as regression anchors.

Rates are in Mbps, noise in SNU, distances in km.
"""

DISTANCES_KM = (5.0, 10.0, 25.0, 50.0, 75.0, 100.0)

LOSS_DB = {5.0: 0.95, 10.0: 1.8, 25.0: 4.75, 50.0: 9.5, 75.0: 12.8, 100.0: 15.8}

# Aggregate asymptotic and finite-size (N_t = 1e10) secret key rates.
R_INF_MBPS = {5.0: 1819.32, 10.0: 1078.48, 25.0: 374.19, 50.0: 112.96, 75.0: 34.63, 100.0: 12.58}
R_FINITE_MBPS = {5.0: 1779.45, 10.0: 1025.49, 25.0: 370.50, 50.0: 99.93, 75.0: 25.70, 100.0: 2.25}

# Worst-case excess noise per subcarrier.
WORST_CASE_XI = {
    5.0: (0.0145, 0.0253, 0.0339, 0.0311, 0.0265),
    10.0: (0.0158, 0.0288, 0.0346, 0.0328, 0.0274),
    25.0: (0.0154, 0.0157, 0.0386, 0.0362, 0.0413),
    50.0: (0.0065, 0.0064, 0.0376, 0.0453, 0.0412),
    75.0: (0.0164, 0.0195, 0.0228, 0.0356, 0.0357),
    100.0: (0.0349, 0.0103, 0.0632, 0.0613, 0.0556),
}

# Optimized modulation variances at 50 km.
V_A_OPTIMA_50KM = (3.8, 3.6, 3.8, 4.1, 4.1)

# Multi-carrier over single-carrier key-rate gains; none exists at 100 km
# because the single-carrier link yields no key.
SKR_GAINS = {5.0: 1.09, 10.0: 1.10, 25.0: 1.13, 50.0: 1.54, 75.0: 5.55}

DISPERSION_NOISE_2GHZ_50KM = 4.711e-5
DISPERSION_NOISE_10GHZ_50KM = 0.0294

OPTIMAL_SUBCARRIERS_50KM = 5
