// SPDX-License-Identifier: Apache-2.0

#include "sonic/mask.hpp"

#include <algorithm>

namespace sonic {

VisibilityMask build_mask(const AugmentedSequence& seq, MaskMode mode) {
    const std::size_t n = seq.length();
    VisibilityMask mask(n);

    // Causal order for every pair first.
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q <= p; ++q) mask.set(p, q, true);
    }

    // Body removal: once a segment's Nexus run has closed, its body is gone
    // for every later position.
    for (std::size_t i = 0; i < seq.bodies.size(); ++i) {
        const Span run = seq.nexus[i];
        if (run.empty()) continue;
        const Span body = seq.bodies[i];
        for (std::size_t p = run.end; p < n; ++p) {
            for (std::size_t q = body.begin; q < body.end; ++q) mask.set(p, q, false);
        }
    }

    // Nexus clique. The inference variant keeps only runs at or before the row's own run.
    for (std::size_t i = 0; i < seq.nexus.size(); ++i) {
        for (std::size_t j = 0; j < seq.nexus.size(); ++j) {
            if (mode == MaskMode::Inference && j > i) continue;
            for (std::size_t p = seq.nexus[i].begin; p < seq.nexus[i].end; ++p) {
                for (std::size_t q = seq.nexus[j].begin; q < seq.nexus[j].end; ++q) mask.set(p, q, true);
            }
        }
    }
    return mask;
}

bool mask_oracle(const AugmentedSequence& seq, std::size_t p, std::size_t q) {
    const PositionTag& a = seq.tags[p];
    const PositionTag& b = seq.tags[q];
    if (a.kind == TagKind::Nexus && b.kind == TagKind::Nexus) return true;
    if (b.kind == TagKind::Body) {
        // Last Nexus position of b's segment, found by scanning tags.
        bool has_nexus = false;
        std::size_t last = 0;
        for (std::size_t x = 0; x < seq.tags.size(); ++x) {
            if (seq.tags[x].kind == TagKind::Nexus && seq.tags[x].segment == b.segment) {
                has_nexus = true;
                last = x;
            }
        }
        if (has_nexus && p > last) return false;
    }
    return q <= p;
}

void dump_mask(const AugmentedSequence& seq, const VisibilityMask& mask, std::ostream& out) {
    const std::size_t n = seq.length();
    for (std::size_t p = 0; p < n; ++p) {
        const auto& t = seq.tags[p];
        out << '@' << p << '/' << n << ' ' << tag_name(t.kind);
        if (t.kind == TagKind::Body) out << ' ' << t.segment + 1 << " - " << t.turn;
        if (t.kind == TagKind::Nexus) out << ' ' << t.segment + 1 << ' ' << t.slot << ' ' << t.turn;
        out << '\n';
    }
    for (std::size_t p = 0; p < n; ++p) {
        std::string row(n, '0');
        for (std::size_t q = 0; q < n; ++q) {
            if (mask.visible(p, q)) row[q] = '1';
        }
        out << row << '\n';
    }
}

}  // namespace sonic
