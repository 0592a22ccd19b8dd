#pragma once

#include "flowsim/block.hpp"

namespace flowsim::blocks {

void register_sources(TemplateRegistry& reg);
void register_algebra(TemplateRegistry& reg);
void register_dynamic(TemplateRegistry& reg);
void register_indmc1(TemplateRegistry& reg);

std::vector<RealParam> xy_table_params(int n);

// Local index helpers for templates laid out as inputs, outputs, aux.
inline std::vector<int> iota_vars(int first, int count) {
    std::vector<int> v;
    for (int i = 0; i < count; ++i) v.push_back(first + i);
    return v;
}

}  // namespace flowsim::blocks
