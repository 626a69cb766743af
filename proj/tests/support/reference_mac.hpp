#pragma once

#include <vector>

#include "mac/model.hpp"

namespace mac::testing {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, Mat[r][c]

/// Straight-line recomputation of the classifier with plain loops over
/// std::vector. Shares no code with the tape engine; reads parameter values
/// only.
struct ReferenceOutput {
  Vec claim;                   // c
  Vec claim_ext;               // c_ext
  std::vector<Mat> word_attn;  // per slot, m x h1 (empty for padded slots)
  Mat doc_matrix;              // k x y
  Mat doc_attn;                // k x h2
  Vec evidence;                // d_rich
  double logit = 0.0;
  double y_hat = 0.0;
};

ReferenceOutput reference_forward(const MacParams& params, const MacConfig& cfg, const ClaimInstance& inst);

}  // namespace mac::testing
