#pragma once

#include "rkmmd/benchmark.hpp"
#include "rkmmd/config_file.hpp"
#include "rkmmd/coral.hpp"
#include "rkmmd/core.hpp"
#include "rkmmd/data.hpp"
#include "rkmmd/kernel.hpp"
#include "rkmmd/labeled_dataset.hpp"
#include "rkmmd/metrics.hpp"
#include "rkmmd/mmd.hpp"
#include "rkmmd/net.hpp"
#include "rkmmd/train.hpp"
