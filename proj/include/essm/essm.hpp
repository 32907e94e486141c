#pragma once

// Umbrella header for the eSSM library.

#include "essm/benchmark.hpp"
#include "essm/conv_engine.hpp"
#include "essm/errors.hpp"
#include "essm/fft.hpp"
#include "essm/layer.hpp"
#include "essm/parallel.hpp"
#include "essm/spectral_init.hpp"
#include "essm/ssm_core.hpp"
#include "essm/trainer.hpp"
#include "essm/types.hpp"
