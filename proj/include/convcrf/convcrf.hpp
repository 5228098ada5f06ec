#pragma once

// Umbrella header for the ConvCRF engine.

#include "convcrf/bench.hpp"
#include "convcrf/checkpoint.hpp"
#include "convcrf/commands.hpp"
#include "convcrf/config.hpp"
#include "convcrf/ctf_io.hpp"
#include "convcrf/dataset.hpp"
#include "convcrf/features.hpp"
#include "convcrf/kernels.hpp"
#include "convcrf/label_map.hpp"
#include "convcrf/mean_field.hpp"
#include "convcrf/message_passing.hpp"
#include "convcrf/metrics.hpp"
#include "convcrf/params.hpp"
#include "convcrf/png_io.hpp"
#include "convcrf/rng.hpp"
#include "convcrf/synthetic.hpp"
#include "convcrf/tensor.hpp"
#include "convcrf/training.hpp"
#include "convcrf/util.hpp"
