#pragma once

#include "stepnet/tensor.hpp"

namespace stepnet {

// Frame-difference motion surrogate with the 10-channel flow interface.
// For every frame i, the 6-frame window [i-2, i+3] (clamped at clip ends)
// yields 5 consecutive grayscale temporal differences; each difference
// contributes its horizontal and vertical spatial gradient, giving channels
// [2k] = d/dx and [2k+1] = d/dy of difference k. Values are clipped to
// [-1, 1]. Not a variational flow, but static content maps to exact zeros
// and translation shows up in the matching gradient channels.
Tensor<float> pseudo_flow(const Tensor<float>& clip);

}  // namespace stepnet
