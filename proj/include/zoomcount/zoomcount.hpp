#pragma once

#include "zoomcount/backends.hpp"
#include "zoomcount/core.hpp"
#include "zoomcount/evalmetrics.hpp"
#include "zoomcount/io.hpp"
#include "zoomcount/labeler.hpp"
#include "zoomcount/pipeline.hpp"
#include "zoomcount/raster.hpp"
#include "zoomcount/rfdb.hpp"
#include "zoomcount/rse.hpp"
#include "zoomcount/synth.hpp"
#include "zoomcount/tiler.hpp"
