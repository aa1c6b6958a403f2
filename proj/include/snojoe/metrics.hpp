#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace snojoe {

/// Scores for in-distribution (positive class) and OOD samples; larger
/// scores mean more in-distribution.
struct ScoreSet {
    std::vector<double> id_scores;
    std::vector<double> ood_scores;
    std::string method_name;

    void validate() const;
};

struct FprAtTpr {
    double fpr;
    double tau;
};

/// tau is the largest ID score whose "score >= tau" acceptance keeps at least
/// `tpr` of the ID scores; fpr is the fraction of OOD scores with score >= tau.
FprAtTpr fpr_at_tpr(const ScoreSet& scores, double tpr = 0.95);

/// Mann-Whitney AUROC with half credit for ties, O(n log n).
double auroc(const ScoreSet& scores);

/// Step-wise average precision over descending distinct thresholds, each
/// tie block entering at once. `id_positive = false` treats OOD as the
/// positive class with negated scores (aupr_out).
double aupr(const ScoreSet& scores, bool id_positive = true);

struct DetectionReport {
    std::string method_name;
    double fpr95 = 0.0;
    double auroc = 0.0;
    double aupr = 0.0;
    double tau = 0.0;
    std::size_t num_id = 0;
    std::size_t num_ood = 0;
    std::uint64_t seed = 0;
};

DetectionReport evaluate(const ScoreSet& scores, std::uint64_t seed = 0);

}  // namespace snojoe
