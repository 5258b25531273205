#pragma once

// Federated unsupervised re-identification simulator, desk scale.

#include "fedsim/clustering.hpp"
#include "fedsim/cloud.hpp"
#include "fedsim/config.hpp"
#include "fedsim/edge.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/eval.hpp"
#include "fedsim/io.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/net.hpp"
#include "fedsim/params.hpp"
#include "fedsim/profiler.hpp"
#include "fedsim/report.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/scoring.hpp"
#include "fedsim/synth.hpp"
