#pragma once

#include <vector>

#include "haf/numeric.hpp"
#include "haf/taxonomy.hpp"

namespace haf {

struct CrmRanking {
  Vector risks;            // expected LCA cost per fine class
  std::vector<int> order;  // ascending risk, ties to the lower index
};

/// Conditional risk minimization: rerank fine classes by expected LCA cost
/// under the predicted distribution, risks[k] = sum_j lca(k,j) * p[j].
CrmRanking crm_rerank(const LcaMatrix& lca, const Vector& p);

}  // namespace haf
