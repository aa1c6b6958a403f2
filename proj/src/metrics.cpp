#include "snojoe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace snojoe {

namespace {

struct Tagged {
    double score;
    bool positive;
};

std::vector<Tagged> merge_descending(const std::vector<double>& pos, const std::vector<double>& neg, double sign) {
    std::vector<Tagged> all;
    all.reserve(pos.size() + neg.size());
    for (double s : pos) all.push_back({sign * s, true});
    for (double s : neg) all.push_back({sign * s, false});
    std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.score > b.score; });
    return all;
}

}  // namespace

void ScoreSet::validate() const {
    if (id_scores.empty() || ood_scores.empty()) throw std::invalid_argument("score set needs ID and OOD scores");
    for (double s : id_scores)
        if (!std::isfinite(s)) throw std::invalid_argument("non-finite ID score");
    for (double s : ood_scores)
        if (!std::isfinite(s)) throw std::invalid_argument("non-finite OOD score");
}

FprAtTpr fpr_at_tpr(const ScoreSet& scores, double tpr) {
    scores.validate();
    if (!(tpr > 0.0 && tpr < 1.0)) throw std::invalid_argument("fpr_at_tpr: tpr must lie in (0, 1)");
    std::vector<double> id = scores.id_scores;
    std::sort(id.begin(), id.end(), std::greater<>());
    const auto n = id.size();
    // id[k] accepts every ID score >= id[k]; take the first (largest) k whose
    // acceptance count, including its ties, reaches tpr.
    double tau = id.back();
    for (std::size_t k = 0; k < n;) {
        std::size_t j = k;
        while (j < n && id[j] == id[k]) ++j;
        if (static_cast<double>(j) / static_cast<double>(n) >= tpr) {
            tau = id[k];
            break;
        }
        k = j;
    }
    const auto fp = std::count_if(scores.ood_scores.begin(), scores.ood_scores.end(), [tau](double s) { return s >= tau; });
    return {static_cast<double>(fp) / static_cast<double>(scores.ood_scores.size()), tau};
}

double auroc(const ScoreSet& scores) {
    scores.validate();
    const auto all = merge_descending(scores.id_scores, scores.ood_scores, 1.0);
    // For each tie block: every ID in it beats the OOD scores below the block
    // and ties with the OOD scores inside it.
    double wins = 0.0;
    std::size_t ood_seen = 0;
    const std::size_t total_ood = scores.ood_scores.size();
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        std::size_t id_in = 0;
        std::size_t ood_in = 0;
        while (j < all.size() && all[j].score == all[i].score) {
            (all[j].positive ? id_in : ood_in) += 1;
            ++j;
        }
        const std::size_t ood_below = total_ood - ood_seen - ood_in;
        wins += static_cast<double>(id_in) * (static_cast<double>(ood_below) + 0.5 * static_cast<double>(ood_in));
        ood_seen += ood_in;
        i = j;
    }
    return wins / (static_cast<double>(scores.id_scores.size()) * static_cast<double>(total_ood));
}

double aupr(const ScoreSet& scores, bool id_positive) {
    scores.validate();
    const auto all = id_positive ? merge_descending(scores.id_scores, scores.ood_scores, 1.0)
                                 : merge_descending(scores.ood_scores, scores.id_scores, -1.0);
    const double positives = static_cast<double>(id_positive ? scores.id_scores.size() : scores.ood_scores.size());
    double tp = 0.0;
    double fp = 0.0;
    double ap = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        double tp_in = 0.0;
        while (j < all.size() && all[j].score == all[i].score) {
            if (all[j].positive) {
                tp_in += 1.0;
            } else {
                fp += 1.0;
            }
            ++j;
        }
        tp += tp_in;
        if (tp_in > 0.0) ap += (tp_in / positives) * (tp / (tp + fp));
        i = j;
    }
    return ap;
}

DetectionReport evaluate(const ScoreSet& scores, std::uint64_t seed) {
    const FprAtTpr f = fpr_at_tpr(scores, 0.95);
    DetectionReport r;
    r.method_name = scores.method_name;
    r.fpr95 = f.fpr;
    r.tau = f.tau;
    r.auroc = auroc(scores);
    r.aupr = aupr(scores);
    r.num_id = scores.id_scores.size();
    r.num_ood = scores.ood_scores.size();
    r.seed = seed;
    return r;
}

}  // namespace snojoe
