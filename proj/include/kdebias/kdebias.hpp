#pragma once

#include "kdebias/error.hpp"
#include "kdebias/linalg.hpp"
#include "kdebias/bandwidth.hpp"
#include "kdebias/summation.hpp"
#include "kdebias/parallel.hpp"
#include "kdebias/quadrature.hpp"
#include "kdebias/kernels.hpp"
#include "kdebias/sample_set.hpp"
#include "kdebias/densities.hpp"
#include "kdebias/estimator.hpp"
#include "kdebias/convolution.hpp"
#include "kdebias/rate_fit.hpp"
#include "kdebias/bias_analysis.hpp"
#include "kdebias/lower_bound_lab.hpp"
