#pragma once

// Umbrella header.

#include "permshift/catalog.hpp"
#include "permshift/common.hpp"
#include "permshift/correlation.hpp"
#include "permshift/dataset.hpp"
#include "permshift/experiment.hpp"
#include "permshift/learners.hpp"
#include "permshift/metrics.hpp"
#include "permshift/selection.hpp"
#include "permshift/shap.hpp"
#include "permshift/synthgen.hpp"
