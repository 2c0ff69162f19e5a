#pragma once

// Neural architecture search in a learned embedding space: pretrain an
// architecture autoencoder, warm-start a REINFORCE controller from its
// encoder, and search by sampling embeddings that the frozen decoder maps
// back to discrete architectures.

#include "nases/arch_space.hpp"
#include "nases/autoencoder.hpp"
#include "nases/child_net.hpp"
#include "nases/config.hpp"
#include "nases/controller.hpp"
#include "nases/conv.hpp"
#include "nases/dataset.hpp"
#include "nases/evaluator.hpp"
#include "nases/grad_check.hpp"
#include "nases/init.hpp"
#include "nases/kernels.hpp"
#include "nases/lstm.hpp"
#include "nases/optim.hpp"
#include "nases/param_set.hpp"
#include "nases/recurrent.hpp"
#include "nases/rng.hpp"
#include "nases/schedule.hpp"
#include "nases/search.hpp"
#include "nases/tensor.hpp"
