#include "haf/crm.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "haf/error.hpp"

namespace haf {

CrmRanking crm_rerank(const LcaMatrix& lca, const Vector& p) {
  const int n = static_cast<int>(lca.rows());
  if (lca.cols() != n || p.size() != n) {
    throw Error(ErrorCode::LengthMismatch,
                "crm_rerank: lca is " + std::to_string(lca.rows()) + "x" +
                    std::to_string(lca.cols()) + " but p has " +
                    std::to_string(p.size()) + " entries");
  }
  CrmRanking r;
  r.risks = lca.cast<double>() * p;
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](int a, int b) { return r.risks[a] < r.risks[b]; });
  return r;
}

}  // namespace haf
