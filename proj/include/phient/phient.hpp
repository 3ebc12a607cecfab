#pragma once

#include "phient/spectral.hpp"
#include "phient/phi_catalog.hpp"
#include "phient/report.hpp"
#include "phient/frechet.hpp"
#include "phient/ensemble.hpp"
#include "phient/sampling.hpp"
#include "phient/entropy.hpp"
#include "phient/characterizations.hpp"
#include "phient/channels.hpp"
#include "phient/harness.hpp"
