#pragma once

#include "nodefail/bench.hpp"
#include "nodefail/common.hpp"
#include "nodefail/config.hpp"
#include "nodefail/dataset.hpp"
#include "nodefail/ensemble.hpp"
#include "nodefail/evaluation.hpp"
#include "nodefail/features.hpp"
#include "nodefail/forest.hpp"
#include "nodefail/labeling.hpp"
#include "nodefail/matrix_io.hpp"
#include "nodefail/parallel.hpp"
#include "nodefail/pipeline.hpp"
#include "nodefail/rng.hpp"
#include "nodefail/rolling.hpp"
#include "nodefail/synth.hpp"
#include "nodefail/trace.hpp"
