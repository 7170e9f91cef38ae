// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <vector>

#include "sonic/nexus.hpp"

namespace sonic {

enum class MaskMode {
    // Full training mask: every Nexus position sees every other Nexus position.
    Training,
    // Incremental-inference mask: a Nexus run sees only its own and earlier runs,
    // matching Nexus KV entries that are frozen when their segment closes.
    Inference,
};

// L x L visibility; true means query row p may attend to key column q.
class VisibilityMask {
public:
    VisibilityMask() = default;
    explicit VisibilityMask(std::size_t length) : length_(length), bits_(length * length, 0) {}

    std::size_t length() const { return length_; }
    bool visible(std::size_t p, std::size_t q) const { return bits_[p * length_ + q] != 0; }
    void set(std::size_t p, std::size_t q, bool v) { bits_[p * length_ + q] = v ? 1 : 0; }
    // Row view for attention kernels.
    const unsigned char* row(std::size_t p) const { return bits_.data() + p * length_; }

    bool operator==(const VisibilityMask&) const = default;

private:
    std::size_t length_ = 0;
    std::vector<unsigned char> bits_;
};

VisibilityMask build_mask(const AugmentedSequence& seq, MaskMode mode = MaskMode::Training);

// Evaluates a single pair directly from the position tags. Shares no code with build_mask.
bool mask_oracle(const AugmentedSequence& seq, std::size_t p, std::size_t q);

// Text grid: one header line per position ("@p/L TAG [segment slot turn]"),
// then one row of L symbols per position ('1' visible, '0' masked).
void dump_mask(const AugmentedSequence& seq, const VisibilityMask& mask, std::ostream& out);

}  // namespace sonic
