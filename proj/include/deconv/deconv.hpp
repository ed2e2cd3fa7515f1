#pragma once

// Umbrella header for the library (the CLI layer in cli.hpp is separate).

#include "deconv/clustering.hpp"
#include "deconv/dataset.hpp"
#include "deconv/deconvolver.hpp"
#include "deconv/error_model.hpp"
#include "deconv/errors.hpp"
#include "deconv/hetero_stage1.hpp"
#include "deconv/mh.hpp"
#include "deconv/mixture.hpp"
#include "deconv/parallel.hpp"
#include "deconv/simulation.hpp"
#include "deconv/splines.hpp"
#include "deconv/stats_core.hpp"
