/*
 * Copyright 2026 The weissi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Rescales the layers of a small ReLU network, then prints how the outputs
// and each regularizer respond.

#include <cstdio>

#include "weissi/weissi.hpp"

int main() {
  namespace w = weissi;
  w::Network net = w::mlp({8, 16, 16, 3});
  w::init(net, {}, 7);

  const w::ScaleShift shift({2.5, 0.8, 0.5});
  const w::Network shifted = w::apply_shift(net, shift);

  const auto eq = w::check_equivalence(net, shifted, 64, 11);
  std::printf("max output difference   %.3e\n", eq.max_abs_diff);
  std::printf("weight decay            %.6f -> %.6f\n", w::wd(net), w::wd(shifted));
  std::printf("minimized weight decay  %.6f -> %.6f\n", w::minimized_wd(w::squared_norms(net)).value,
              w::minimized_wd(w::squared_norms(shifted)).value);

  const w::RegValue a = w::weissi(net, 1.0, 1.0), b = w::weissi(shifted, 1.0, 1.0);
  std::printf("weissi energy           %.6f -> %.6f\n", a.energy_term, b.energy_term);
  std::printf("weissi complexity       %.6f -> %.6f\n", a.complexity_term, b.complexity_term);
  return 0;
}
