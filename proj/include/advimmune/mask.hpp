#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "advimmune/common.hpp"

namespace advimmune {

struct Selection {
    int round = 0;
    int src = 0;
    int dst = 0;
    double value = 0.0;
};

// Conceptually a dense {0,1} matrix; only the zero entries are stored.
// A zero locks the clean state of that directed pair against the attacker.
struct ImmuneMask {
    int num_nodes = 0;
    std::set<std::pair<int, int>> zeros;
    std::vector<int> incident_zeros;  // per node, zeros in its row plus column
    std::vector<Selection> trace;

    explicit ImmuneMask(int n = 0) : num_nodes(n), incident_zeros(n, 0) {}

    bool is_immunized(int i, int j) const { return zeros.count({i, j}) > 0; }
    long long zero_count() const { return static_cast<long long>(zeros.size()); }

    void immunize(int i, int j, int round, double value);

    // zeros in row i, sorted by column
    std::vector<int> row_zeros(int i) const;

    void validate_budgets(long long global, const std::vector<int>& local) const;
};

void save_mask(const ImmuneMask& mask, const std::string& path,
               const std::vector<long long>& original_ids,
               const std::string& header_comment);

ImmuneMask load_mask(const std::string& path, int num_nodes,
                     const std::vector<long long>& original_ids);

}  // namespace advimmune
