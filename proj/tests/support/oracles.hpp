#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the code under test.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <vector>

namespace evojudge::oracle {

// rel[i][j] is -1, 0 or +1 as candidate i is worse than, tied with, or better than j.
using Relation = std::vector<std::vector<int>>;

inline Relation relation_from_scores(const std::vector<int>& scores) {
    const auto k = scores.size();
    Relation rel(k, std::vector<int>(k, 0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) rel[i][j] = (scores[i] > scores[j]) - (scores[i] < scores[j]);
    }
    return rel;
}

// Group position of each index: 0 is best.
inline Relation relation_from_positions(const std::vector<std::size_t>& pos) {
    const auto k = pos.size();
    Relation rel(k, std::vector<int>(k, 0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) rel[i][j] = (pos[i] < pos[j]) - (pos[i] > pos[j]);
    }
    return rel;
}

// Brute-force ranking: sort index pairs by score, then merge equal neighbours.
inline std::vector<std::vector<std::size_t>> groups_by_sorting(const std::vector<int>& scores) {
    std::vector<std::pair<int, std::size_t>> pairs;
    for (std::size_t i = 0; i < scores.size(); ++i) pairs.emplace_back(-scores[i], i);
    std::sort(pairs.begin(), pairs.end());
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        if (n == 0 || pairs[n].first != pairs[n - 1].first) groups.emplace_back();
        groups.back().push_back(pairs[n].second);
    }
    return groups;
}

// Every ordered set partition of {0..k-1}, as a group-position vector per index.
inline std::vector<std::vector<std::size_t>> ordered_partitions(std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> pos(k, 0);
    // Enumerate all assignments into positions 0..k-1 and keep the surjective
    // ones onto a prefix {0..m-1}.
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == k) {
            std::vector<bool> used(k, false);
            std::size_t m = 0;
            for (auto p : pos) {
                used[p] = true;
                m = std::max(m, p + 1);
            }
            for (std::size_t p = 0; p < m; ++p) {
                if (!used[p]) return;
            }
            out.push_back(pos);
            return;
        }
        for (std::size_t p = 0; p < k; ++p) {
            pos[i] = p;
            rec(i + 1);
        }
    };
    rec(0);
    return out;
}

inline std::vector<std::vector<std::size_t>> groups_from_positions(const std::vector<std::size_t>& pos) {
    std::size_t m = 0;
    for (auto p : pos) m = std::max(m, p + 1);
    std::vector<std::vector<std::size_t>> groups(m);
    for (std::size_t i = 0; i < pos.size(); ++i) groups[pos[i]].push_back(i);
    return groups;
}

// Direct pair loop: matching pairs over all pairs.
inline double pairwise_agreement(const std::vector<std::pair<Relation, Relation>>& pred_gt) {
    std::size_t pairs = 0;
    std::size_t hits = 0;
    for (const auto& [p, g] : pred_gt) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            for (std::size_t j = i + 1; j < p.size(); ++j) {
                ++pairs;
                hits += p[i][j] == g[i][j];
            }
        }
    }
    return pairs == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(pairs);
}

} // namespace evojudge::oracle
