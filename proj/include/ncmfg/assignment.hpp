#pragma once

#include <vector>

namespace ncmfg {

// Minimum-cost perfect matching on a dense n x n cost matrix (row-major).
// Returns the column assigned to every row. O(n^3) shortest augmenting
// paths with potentials.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n, double* total = nullptr);

}  // namespace ncmfg
