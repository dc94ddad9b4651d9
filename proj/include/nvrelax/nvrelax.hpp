#pragma once

// Umbrella header for the NV relaxometry simulation and analysis toolkit.

#include "nvrelax/config.hpp"
#include "nvrelax/core.hpp"
#include "nvrelax/detection.hpp"
#include "nvrelax/errors.hpp"
#include "nvrelax/fitting.hpp"
#include "nvrelax/io.hpp"
#include "nvrelax/photophysics.hpp"
#include "nvrelax/pipeline.hpp"
#include "nvrelax/relaxometry.hpp"
#include "nvrelax/rng.hpp"
#include "nvrelax/spectra.hpp"
#include "nvrelax/synth.hpp"
#include "nvrelax/trace.hpp"
#include "nvrelax/version.hpp"
