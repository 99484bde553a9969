#pragma once

#include "iotfp/aggregate.hpp"
#include "iotfp/anomaly.hpp"
#include "iotfp/chi2_table.hpp"
#include "iotfp/core.hpp"
#include "iotfp/error.hpp"
#include "iotfp/experiments.hpp"
#include "iotfp/fingerprint.hpp"
#include "iotfp/io.hpp"
#include "iotfp/metrics.hpp"
#include "iotfp/obfuscation.hpp"
#include "iotfp/param_estimation.hpp"
#include "iotfp/synth.hpp"
#include "iotfp/window_detector.hpp"
