#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "la2/tensor.hpp"

namespace la2::detail {

bool& grad_mode();
void check_finite(const char* op, std::span<const double> values);

/// Builds an op output; records `backward` only when some input needs it.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs, std::function<void(Node&)> backward);

/// Adds g into input.grad when input requires a gradient.
void accumulate(Node& input, std::span<const double> g);

}  // namespace la2::detail
