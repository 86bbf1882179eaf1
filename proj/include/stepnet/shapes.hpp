#pragma once

#include <string>
#include <vector>

#include "stepnet/model.hpp"

namespace stepnet {

struct NamedShape {
  std::string name;
  Shape dims;
};

// Shape arithmetic for every named tensor of one forward pass, no data
// involved. Mirrors the op-level shape rules exactly; a unit test holds it
// to the real forward pass at desk dims.
std::vector<NamedShape> propagate_shapes(const ModelConfig& cfg);

// The reference shape table at full scale (T=16, C=2048, 16x16 maps, N=3,
// L=8, d=1024).
std::vector<NamedShape> reference_shape_table();

// Model config whose propagated shapes must reproduce the reference table.
ModelConfig paper_scale_config();

// "name: AxBxC" lines; diff returns the mismatching names.
std::string format_shape_line(const NamedShape& s);
std::vector<std::string> diff_shapes(const std::vector<NamedShape>& got,
                                     const std::vector<NamedShape>& expected);

}  // namespace stepnet
