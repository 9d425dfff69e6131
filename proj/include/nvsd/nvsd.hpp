#ifndef NVSD_NVSD_HPP
#define NVSD_NVSD_HPP

#include "nvsd/cache.hpp"
#include "nvsd/config.hpp"
#include "nvsd/error.hpp"
#include "nvsd/hierarchy.hpp"
#include "nvsd/hmc.hpp"
#include "nvsd/metrics.hpp"
#include "nvsd/prefetch.hpp"
#include "nvsd/report.hpp"
#include "nvsd/trace.hpp"

#endif
