#pragma once

#include "eblab/autodiff.hpp"
#include "eblab/config.hpp"
#include "eblab/data.hpp"
#include "eblab/equilibrium.hpp"
#include "eblab/harness.hpp"
#include "eblab/metrics.hpp"
#include "eblab/nets.hpp"
#include "eblab/objectives.hpp"
#include "eblab/optim.hpp"
#include "eblab/oracle.hpp"
#include "eblab/rng.hpp"
#include "eblab/tensor.hpp"
#include "eblab/trainer.hpp"
