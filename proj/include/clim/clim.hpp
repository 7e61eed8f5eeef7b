#pragma once

// Umbrella header: the whole library.

#include "clim/config.hpp"
#include "clim/conv.hpp"
#include "clim/geometry.hpp"
#include "clim/gradcheck.hpp"
#include "clim/image.hpp"
#include "clim/ops.hpp"
#include "clim/optim.hpp"
#include "clim/params.hpp"
#include "clim/rng.hpp"
#include "clim/synthbench.hpp"
#include "clim/tensor.hpp"
#include "clim/tensor_io.hpp"
#include "clim/tracker.hpp"
#include "clim/train.hpp"
