#pragma once

namespace kcheck {

// Output of a binary checker: hard label plus the score it was derived from
// (a probability for PCA checkers, a mean cosine for contrastive ones).
struct Decision {
    int label = 0;
    double score = 0.0;
};

}  // namespace kcheck
