#ifndef ROMIMG_ROMIMG_HPP
#define ROMIMG_ROMIMG_HPP

#include "romimg/core.hpp"
#include "romimg/media.hpp"
#include "romimg/phantom.hpp"
#include "romimg/model_io.hpp"
#include "romimg/propagate.hpp"
#include "romimg/rom.hpp"
#include "romimg/regularization.hpp"
#include "romimg/imaging.hpp"
#include "romimg/metrics.hpp"
#include "romimg/experiment.hpp"

#endif  // ROMIMG_ROMIMG_HPP
