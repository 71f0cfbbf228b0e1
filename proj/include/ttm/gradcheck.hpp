#pragma once

#include <functional>

#include "ttm/params.hpp"

namespace ttm {

// Central finite-difference check of reverse-mode gradients for every
// element of every parameter. `loss_fn` must rebuild the forward graph
// from the current parameter values on each call.
//
// Returned error is relative above unit scale and absolute below:
// |fd - g| / max(1, |fd|, |g|).
double gradcheck_max_error(ParameterSet& params,
                           const std::function<Tensor()>& loss_fn,
                           double eps = 1e-5);

}  // namespace ttm
