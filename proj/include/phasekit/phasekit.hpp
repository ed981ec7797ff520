#pragma once

// Umbrella header: the whole library.

#include "phasekit/aggregation.hpp"
#include "phasekit/config.hpp"
#include "phasekit/dataset.hpp"
#include "phasekit/errors.hpp"
#include "phasekit/io.hpp"
#include "phasekit/matrix.hpp"
#include "phasekit/metrics.hpp"
#include "phasekit/streaming.hpp"
#include "phasekit/synthetic.hpp"
#include "phasekit/tape.hpp"
#include "phasekit/tcn.hpp"
#include "phasekit/training.hpp"
#include "phasekit/transformer.hpp"
