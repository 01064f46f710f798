"""Constants shared by both kernel backends."""

import math

# Truncation point of the alternating-series J*(1, z) sampler (Devroye).
PG_TRUNC = 0.64
PG_TRUNC_RECIP = 1.0 / PG_TRUNC
PI2_8 = math.pi ** 2 / 8.0
LOG_PI = math.log(math.pi)
LOG_2 = math.log(2.0)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Source family codes understood by the log-likelihood kernels.
SECH, STUDENT_T, LAPLACE, GAUSSIAN, MIXED = 0, 1, 2, 3, 4
