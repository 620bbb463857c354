#ifndef LEVYBRIDGE_LEVYBRIDGE_HPP
#define LEVYBRIDGE_LEVYBRIDGE_HPP

#include "levybridge/bridge_sim.hpp"
#include "levybridge/conditional.hpp"
#include "levybridge/density_kernels.hpp"
#include "levybridge/diagnostics.hpp"
#include "levybridge/errors.hpp"
#include "levybridge/measures.hpp"
#include "levybridge/parallel.hpp"
#include "levybridge/quadrature.hpp"
#include "levybridge/rng.hpp"
#include "levybridge/stats.hpp"

#endif
