#ifndef STUN_STUN_HPP_
#define STUN_STUN_HPP_

// Umbrella header for the self-teaching uncertainty estimation library:
// teacher/student training for place recognition, probabilistic embeddings,
// retrieval and calibration metrics.

#include "stun/baselines.hpp"
#include "stun/checkpoint.hpp"
#include "stun/config.hpp"
#include "stun/errors.hpp"
#include "stun/eval.hpp"
#include "stun/geo.hpp"
#include "stun/layers.hpp"
#include "stun/losses.hpp"
#include "stun/mining.hpp"
#include "stun/net.hpp"
#include "stun/optim.hpp"
#include "stun/pipeline.hpp"
#include "stun/plot.hpp"
#include "stun/retrieval.hpp"
#include "stun/rng.hpp"
#include "stun/synthdata.hpp"
#include "stun/tensor.hpp"
#include "stun/train.hpp"
#include "stun/types.hpp"

#endif  // STUN_STUN_HPP_
