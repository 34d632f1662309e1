#pragma once

#include "nlslab/config.hpp"
#include "nlslab/diagnostics.hpp"
#include "nlslab/error.hpp"
#include "nlslab/evolution.hpp"
#include "nlslab/fit.hpp"
#include "nlslab/ground_state.hpp"
#include "nlslab/parallel.hpp"
#include "nlslab/profile.hpp"
#include "nlslab/remainder_solver.hpp"
#include "nlslab/snapshot.hpp"
#include "nlslab/spectral_domain.hpp"
#include "nlslab/verification.hpp"
