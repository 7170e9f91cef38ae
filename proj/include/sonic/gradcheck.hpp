// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "sonic/losses.hpp"
#include "sonic/net.hpp"

namespace sonic {

struct GradcheckConfig {
    std::uint64_t seed = 7;
    double step = 1e-5;
    double tolerance = 1e-4;
    // Denominator floor of the relative error.
    double floor = 1e-6;
    int budget = 2;
    ModelConfig model{2, 16, 4, 32, 64, 7, 1e-6};
    NexusConfig nexus;
    LossWeights weights;

    GradcheckConfig();
};

struct ComponentCheck {
    std::string name;
    std::size_t coordinates = 0;
    std::size_t failures = 0;
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
};

struct GradcheckReport {
    std::vector<ComponentCheck> components;
    bool passed = true;
};

nlohmann::json to_json(const GradcheckReport& r);

// |a - n| / max(floor, |a|, |n|).
double relative_error(double analytic, double numeric, double floor);

// Central differences of L_KD, L_H, L_AKD, L_Reg, L_recon and L_total over every
// trainable coordinate of a freshly seeded model on a seeded conversation.
GradcheckReport run_gradcheck(const GradcheckConfig& config);

// The conversation and vocabulary used by run_gradcheck.
struct GradcheckFixture {
    Vocabulary vocab;
    SegmentedConversation conversation;
};

GradcheckFixture gradcheck_fixture(std::uint64_t seed);

}  // namespace sonic
