#pragma once

// umbrella header

#include "wxc/catalog.hpp"
#include "wxc/climatology.hpp"
#include "wxc/container.hpp"
#include "wxc/downscale.hpp"
#include "wxc/gravity_wave.hpp"
#include "wxc/grid.hpp"
#include "wxc/masking.hpp"
#include "wxc/metrics.hpp"
#include "wxc/model.hpp"
#include "wxc/run_config.hpp"
#include "wxc/spectra.hpp"
#include "wxc/stats.hpp"
#include "wxc/synthetic.hpp"
#include "wxc/tracking.hpp"
#include "wxc/trainer.hpp"
