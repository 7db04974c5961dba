#pragma once

// Umbrella header.

#include "luna/cluster.hpp"
#include "luna/combine.hpp"
#include "luna/config.hpp"
#include "luna/csv.hpp"
#include "luna/detect.hpp"
#include "luna/ensemble.hpp"
#include "luna/error.hpp"
#include "luna/filters.hpp"
#include "luna/froc.hpp"
#include "luna/image.hpp"
#include "luna/metaimage.hpp"
#include "luna/morphology.hpp"
#include "luna/parallel.hpp"
#include "luna/phantom.hpp"
#include "luna/plot.hpp"
#include "luna/random.hpp"
#include "luna/reference.hpp"
